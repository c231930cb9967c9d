//! Honest-but-curious coalition: what it observes, and the cost-inference
//! attack that integrates a neighbor's trajectory from observed estimates and
//! fits its marginal cost.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::CournotGame;
use crate::graph::{Graph, MixingMatrix};
use crate::protocol::{Message, Mode, StepSchedule, Trace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("adversary set is empty")]
    Empty,
    #[error("adversary set covers every node")]
    AllNodes,
    #[error("adversary node {node} outside 0..{n}")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("node {target} is adversarial")]
    AdversarialTarget { target: usize },
    #[error("estimates of nodes {missing:?} around target {target} are not observable")]
    NotObservable { target: usize, missing: Vec<usize> },
    #[error("all {samples} sampled actions coincide; the fit is rank-deficient")]
    RankDeficient { samples: usize },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("the trace does not carry Cournot demand parameters")]
    MissingDemand,
    #[error("the attack handles scalar actions only, got dimension {0}")]
    Dimension(usize),
}

/// Local state of one compromised node in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub v_hat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRound {
    pub k: usize,
    pub alpha: f64,
    pub locals: BTreeMap<usize, LocalState>,
    /// Every message whose receiver is compromised, ordered by `(from, to)`.
    pub received: Vec<Message>,
    pub xbar: Vec<f64>,
}

/// Public demand curve `p = a − b·x̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub a: f64,
    pub b: f64,
}

/// Everything the coalition sees: its own locals, its inbox, the aggregate,
/// and the public protocol parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryView {
    pub compromised: BTreeSet<usize>,
    pub graph: Graph,
    pub w: MixingMatrix,
    pub schedule: StepSchedule,
    pub x0: Vec<f64>,
    pub dim: usize,
    pub demand: Option<Demand>,
    pub rounds: Vec<ViewRound>,
}

impl AdversaryView {
    pub fn players(&self) -> usize {
        self.graph.node_count()
    }
}

fn check_set(n: usize, adversaries: &BTreeSet<usize>) -> Result<(), AdversaryError> {
    if adversaries.is_empty() {
        return Err(AdversaryError::Empty);
    }
    if let Some(&node) = adversaries.iter().find(|&&a| a >= n) {
        return Err(AdversaryError::NodeOutOfRange { node, n });
    }
    if adversaries.len() == n {
        return Err(AdversaryError::AllNodes);
    }
    Ok(())
}

/// Copies the coalition's observables out of a full trace.
pub fn extract_view(trace: &Trace, adversaries: &BTreeSet<usize>) -> Result<AdversaryView, AdversaryError> {
    let n = trace.players();
    let d = trace.dim();
    check_set(n, adversaries)?;
    let rounds = trace
        .rounds
        .iter()
        .map(|r| {
            let locals = adversaries
                .iter()
                .map(|&a| {
                    let span = a * d..(a + 1) * d;
                    (
                        a,
                        LocalState {
                            x: r.x[span.clone()].to_vec(),
                            v: r.v[span.clone()].to_vec(),
                            v_hat: r.v_hat[span].to_vec(),
                        },
                    )
                })
                .collect();
            ViewRound {
                k: r.k,
                alpha: r.alpha,
                locals,
                received: r
                    .messages
                    .iter()
                    .filter(|m| adversaries.contains(&m.to))
                    .cloned()
                    .collect(),
                xbar: r.xbar.clone(),
            }
        })
        .collect();
    Ok(AdversaryView {
        compromised: adversaries.clone(),
        graph: trace.header.graph.clone(),
        w: trace.header.w.clone(),
        schedule: trace.header.schedule,
        x0: trace.header.x0.clone(),
        dim: d,
        demand: trace.header.game.as_ref().map(|g| Demand { a: g.a, b: g.b }),
        rounds,
    })
}

/// Per-round estimates `v^k_i` the coalition knows or can infer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferredEstimates {
    pub rounds: Vec<BTreeMap<usize, Vec<f64>>>,
    /// Node recovered from the aggregate identity `Σ_i v_i = x̄`, if any.
    pub recovered: Option<usize>,
}

impl InferredEstimates {
    pub fn known(&self, k: usize, i: usize) -> Option<&[f64]> {
        self.rounds.get(k)?.get(&i).map(Vec::as_slice)
    }
}

/// Reads estimates from the coalition's locals and inbox, treating received
/// messages as raw estimates. When exactly one node stays unknown, its
/// estimate is recovered as `x̄ − Σ_known v` since the estimates sum to `x̄`.
pub fn infer_hidden_estimates(view: &AdversaryView) -> InferredEstimates {
    let n = view.players();
    let d = view.dim;
    let mut recovered = None;
    let rounds = view
        .rounds
        .iter()
        .map(|r| {
            let mut known: BTreeMap<usize, Vec<f64>> = r.locals.iter().map(|(&a, s)| (a, s.v.clone())).collect();
            for m in &r.received {
                known.entry(m.from).or_insert_with(|| m.value.clone());
            }
            let unknown: Vec<usize> = (0..n).filter(|i| !known.contains_key(i)).collect();
            if let [u] = unknown[..] {
                let mut value = r.xbar.clone();
                for (_, v) in known.iter() {
                    for c in 0..d {
                        value[c] -= v[c];
                    }
                }
                known.insert(u, value);
                recovered = Some(u);
            }
            known
        })
        .collect();
    InferredEstimates { rounds, recovered }
}

/// One reconstructed observation of a target's gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSample {
    pub k: usize,
    pub x: Vec<f64>,
    pub gradient: Vec<f64>,
    pub v_hat: Vec<f64>,
}

/// Integrates the target's actions from `x^{k+1} − x^k = v^{k+1} − v̂^k` and
/// reads off `g^k = −(x^{k+1} − x^k)/α^k`, valid while the projection is
/// inactive. Samples start at `burn_in`.
pub fn reconstruct_gradients(
    view: &AdversaryView,
    inferred: &InferredEstimates,
    target: usize,
    burn_in: usize,
) -> Result<Vec<GradientSample>, AdversaryError> {
    let n = view.players();
    if target >= n {
        return Err(AdversaryError::NodeOutOfRange { node: target, n });
    }
    if view.compromised.contains(&target) {
        return Err(AdversaryError::AdversarialTarget { target });
    }
    let closed = view.graph.neighbors(target).expect("target in range");
    let d = view.dim;
    let horizon = view.rounds.len();
    let mut missing = BTreeSet::new();
    for k in 0..horizon {
        for &j in &closed {
            if inferred.known(k, j).is_none() {
                missing.insert(j);
            }
        }
    }
    if !missing.is_empty() {
        return Err(AdversaryError::NotObservable {
            target,
            missing: missing.into_iter().collect(),
        });
    }

    let mut x = view.x0.clone();
    let mut out = Vec::new();
    for k in 0..horizon.saturating_sub(1) {
        let mut v_hat = vec![0.0; d];
        for &j in &closed {
            let wtj = view.w.get(target, j);
            let vj = inferred.known(k, j).expect("checked above");
            for c in 0..d {
                v_hat[c] += wtj * vj[c];
            }
        }
        let next = inferred.known(k + 1, target).expect("checked above");
        let step: Vec<f64> = (0..d).map(|c| next[c] - v_hat[c]).collect();
        let alpha = view.rounds[k].alpha;
        if k >= burn_in {
            out.push(GradientSample {
                k,
                x: x.clone(),
                gradient: step.iter().map(|s| -s / alpha).collect(),
                v_hat,
            });
        }
        for c in 0..d {
            x[c] += step[c];
        }
    }
    Ok(out)
}

/// Affine fit `c'(x) ≈ 2ζ2·x + ζ1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostFit {
    pub zeta2: f64,
    pub zeta1: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub samples: usize,
}

/// Turns gradient samples into marginal-cost samples through the Cournot
/// identity `c'(x) = g + a − b·N·v̂ − b·x` and fits a line by least squares.
pub fn fit_cournot_cost(samples: &[GradientSample], demand: Demand, players: usize) -> Result<CostFit, AdversaryError> {
    if let Some(s) = samples.iter().find(|s| s.x.len() != 1) {
        return Err(AdversaryError::Dimension(s.x.len()));
    }
    if samples.len() < 2 {
        return Err(AdversaryError::TooFewSamples(samples.len()));
    }
    let scale = players as f64;
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| {
            let x = s.x[0];
            (
                x,
                s.gradient[0] + demand.a - demand.b * scale * s.v_hat[0] - demand.b * x,
            )
        })
        .collect();
    let m = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let (lo, hi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.0), h.max(p.0)));
    if hi - lo <= 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
        return Err(AdversaryError::RankDeficient { samples: pts.len() });
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let sse: f64 = pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    Ok(CostFit {
        zeta2: slope / 2.0,
        zeta1: intercept,
        residual: (sse / m).sqrt(),
        samples: pts.len(),
    })
}

/// Attack outcome for one target, in the report's JSON layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEstimate {
    pub target: usize,
    pub zeta2_hat: f64,
    pub zeta1_hat: f64,
    pub rel_err_zeta2: Option<f64>,
    pub rel_err_zeta1: Option<f64>,
    pub residual: f64,
    pub samples: usize,
}

impl TargetEstimate {
    /// Larger of the two relative errors, when scored.
    pub fn error(&self) -> Option<f64> {
        Some(self.rel_err_zeta2?.max(self.rel_err_zeta1?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTarget {
    pub target: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub mode: Mode,
    pub adversaries: Vec<usize>,
    pub burn_in: usize,
    pub targets: Vec<TargetEstimate>,
    pub skipped: Vec<SkippedTarget>,
    /// Set when no target could be attacked.
    pub reason: Option<String>,
}

impl AttackResult {
    /// Mean over targets of each target's larger relative error.
    pub fn mean_error(&self) -> Option<f64> {
        let errs: Option<Vec<f64>> = self.targets.iter().map(TargetEstimate::error).collect();
        let errs = errs?;
        (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
    }

    pub fn max_error(&self) -> Option<f64> {
        let errs: Option<Vec<f64>> = self.targets.iter().map(TargetEstimate::error).collect();
        errs?.into_iter().reduce(f64::max)
    }
}

/// Default burn-in: the first tenth of the horizon.
pub fn default_burn_in(rounds: usize) -> usize {
    rounds / 10
}

fn relative_error(estimate: f64, truth: f64) -> f64 {
    if truth == 0.0 {
        estimate.abs()
    } else {
        ((estimate - truth) / truth).abs()
    }
}

/// Attacks every non-adversarial node whose neighborhood estimates are
/// observable. Estimates come from the view alone; the trace's recorded
/// coefficients are used only to score them.
pub fn attack(trace: &Trace, adversaries: &BTreeSet<usize>, burn_in: usize) -> Result<AttackResult, AdversaryError> {
    let view = extract_view(trace, adversaries)?;
    let demand = view.demand.ok_or(AdversaryError::MissingDemand)?;
    if view.dim != 1 {
        return Err(AdversaryError::Dimension(view.dim));
    }
    let inferred = infer_hidden_estimates(&view);
    let truth: Option<&CournotGame> = trace.header.game.as_ref();
    let mut targets = Vec::new();
    let mut skipped = Vec::new();
    for t in (0..view.players()).filter(|t| !adversaries.contains(t)) {
        let fit = reconstruct_gradients(&view, &inferred, t, burn_in)
            .and_then(|samples| fit_cournot_cost(&samples, demand, view.players()));
        match fit {
            Ok(fit) => targets.push(TargetEstimate {
                target: t,
                zeta2_hat: fit.zeta2,
                zeta1_hat: fit.zeta1,
                rel_err_zeta2: truth.map(|g| relative_error(fit.zeta2, g.zeta2[t])),
                rel_err_zeta1: truth.map(|g| relative_error(fit.zeta1, g.zeta1[t])),
                residual: fit.residual,
                samples: fit.samples,
            }),
            Err(e) => skipped.push(SkippedTarget {
                target: t,
                reason: e.to_string(),
            }),
        }
    }
    let reason = targets.is_empty().then(|| {
        if skipped.is_empty() {
            "no candidate targets".to_string()
        } else {
            format!("no attackable targets: {}", skipped[0].reason)
        }
    });
    Ok(AttackResult {
        mode: trace.header.mode,
        adversaries: adversaries.iter().copied().collect(),
        burn_in,
        targets,
        skipped,
        reason,
    })
}
