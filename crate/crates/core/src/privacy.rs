//! Constructive privacy certification for the obfuscated protocol.
//!
//! Given an execution of game `F` under perturbations `r`, and a
//! transposition `π` of two honest players, the certifier builds
//! perturbations `r̃` under which the permuted game `F̃` produces exactly the
//! observations the coalition saw in `F`. Round by round, the honest-internal
//! perturbations `γ` solve `T γ = ξ` with
//!
//! ```text
//! T = [ B₋  B₊ ]     B₊, B₋: positive and negative parts of the oriented
//!     [ B₊  B₋ ]     incidence matrix of the honest subgraph.
//! ```
//!
//! Edges are oriented from the smaller label (tail) to the larger (head).
//! The first block of `γ` holds head→tail perturbations and the second block
//! tail→head ones, so the first block row of `T` sums what each honest node
//! receives and the second what it sends.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{GameError, GameSpec, Permutation};
use crate::graph::{Graph, GraphError, MixingMatrix, Restriction};
use crate::numerics::{self, DenseMatrix, LeastNorm, NumericsError};
use crate::protocol::{gen_obfuscation, run_private, ObfuscationSequence, ProtocolError, StepSchedule, Trace};

pub const REASON_TOO_SMALL: &str = "fewer than 2 nodes";
pub const REASON_DISCONNECTED: &str = "disconnected residual graph";
pub const REASON_BIPARTITE: &str = "bipartite residual graph";

/// Default tolerance for observable deviations.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Relative residual above which a per-round solve counts as infeasible.
const SOLVE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PrivacyError {
    #[error("residual graph has no edges")]
    NoInternalEdges,
    #[error("cannot swap {i} and {j}: {reason}")]
    InvalidSwap { i: usize, j: usize, reason: String },
    #[error("permutation moves adversarial node {0}")]
    MovesAdversary(usize),
    #[error("transfer system is infeasible at round {round} (residual {residual:e})")]
    Infeasible { round: usize, residual: f64 },
    #[error("traces are not comparable: {0}")]
    ConfigMismatch(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Outcome of [`check_structural`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralCheck {
    pub ok: bool,
    pub residual_nodes: usize,
    pub reasons: Vec<String>,
}

/// The honest subgraph must be connected, non-bipartite and have at least
/// two nodes.
pub fn check_structural(g: &Graph, adversaries: &BTreeSet<usize>) -> Result<StructuralCheck, PrivacyError> {
    let residual = g.restrict(adversaries)?.graph;
    let m = residual.node_count();
    let mut reasons = Vec::new();
    if m < 2 {
        reasons.push(REASON_TOO_SMALL.to_string());
    }
    if !residual.is_connected() {
        reasons.push(REASON_DISCONNECTED.to_string());
    }
    if residual.is_bipartite() {
        reasons.push(REASON_BIPARTITE.to_string());
    }
    Ok(StructuralCheck {
        ok: reasons.is_empty(),
        residual_nodes: m,
        reasons,
    })
}

/// `T` for an honest subgraph, with the map from `γ` slots to directed edges.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferSystem {
    pub residual: Restriction,
    pub t: DenseMatrix,
    /// `slots[s] = (from, to)` in original labels: the perturbation `r̃_{from,to}`
    /// held in `γ[s]`.
    pub slots: Vec<(usize, usize)>,
}

impl TransferSystem {
    /// Honest node count `M`.
    pub fn nodes(&self) -> usize {
        self.residual.graph.node_count()
    }

    pub fn internal_edges(&self) -> usize {
        self.slots.len() / 2
    }

    pub fn expected_rank(&self) -> usize {
        (2 * self.nodes()).saturating_sub(1)
    }
}

/// Builds `T` for the subgraph left after deleting `adversaries`.
pub fn build_transfer_system(g: &Graph, adversaries: &BTreeSet<usize>) -> Result<TransferSystem, PrivacyError> {
    let residual = g.restrict(adversaries)?;
    transfer_system_for(residual)
}

/// Builds `T` for an already restricted graph.
pub fn transfer_system_for(residual: Restriction) -> Result<TransferSystem, PrivacyError> {
    let edges: Vec<(usize, usize)> = residual.graph.edges().collect();
    if edges.is_empty() {
        return Err(PrivacyError::NoInternalEdges);
    }
    let m = residual.graph.node_count();
    let e = edges.len();
    let mut t = DenseMatrix::zeros(2 * m, 2 * e);
    let mut slots = vec![(0, 0); 2 * e];
    for (col, &(tail, head)) in edges.iter().enumerate() {
        // B₋ marks tails, B₊ marks heads
        t[(tail, col)] = 1.0;
        t[(head, e + col)] = 1.0;
        t[(m + head, col)] = 1.0;
        t[(m + tail, e + col)] = 1.0;
        let (ot, oh) = (residual.to_original[tail], residual.to_original[head]);
        slots[col] = (oh, ot);
        slots[e + col] = (ot, oh);
    }
    Ok(TransferSystem { residual, t, slots })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankCertificate {
    pub rank: usize,
    pub expected: usize,
    pub ok: bool,
}

pub fn rank_certify(ts: &TransferSystem, tol: f64) -> Result<RankCertificate, PrivacyError> {
    let rank = numerics::rank(&ts.t, tol)?;
    let expected = ts.expected_rank();
    Ok(RankCertificate {
        rank,
        expected,
        ok: rank == expected,
    })
}

fn check_permutation(perm: &Permutation, n: usize, adversaries: &BTreeSet<usize>) -> Result<(), PrivacyError> {
    if perm.len() != n {
        return Err(PrivacyError::ConfigMismatch(format!(
            "permutation on {} labels for {n} nodes",
            perm.len()
        )));
    }
    if let Some(&a) = adversaries.iter().find(|&&a| perm.apply(a) != a) {
        return Err(PrivacyError::MovesAdversary(a));
    }
    Ok(())
}

/// `α r̃_{ij} = v_{ij} − ṽ_i` for an honest sender `i` and adversarial `j`,
/// where `v_{ij}` is the message `j` received in `F` and `ṽ_i = v_{π(i)}`.
fn boundary_rtilde(trace: &Trace, k: usize, perm: &Permutation, i: usize, j: usize) -> Vec<f64> {
    let r = &trace.rounds[k];
    let d = trace.dim();
    let sent = &r.message(i, j).expect("edge message recorded").value;
    let pi = perm.apply(i);
    (0..d).map(|c| (sent[c] - r.v[pi * d + c]) / r.alpha).collect()
}

/// Right-hand side of the round-`k` transfer system, one `2M` vector per
/// action coordinate. Rows `0..M` are the incoming-sum constraints
///
/// `Σ_{j∈N_i∩H} r̃_{ji} = (v̂_{π(i)} − Σ_{j∈N_i} W_ij v_{π(j)}) / (α δ) − Σ_{j∈N_i∩A} r_{ji}`
///
/// and rows `M..2M` the balance constraints `Σ_{j∈N_i∩H} r̃_{ij} = −Σ_{j∈N_i∩A} r̃_{ij}`,
/// with `H` the honest nodes and all `v` values taken from `F`'s execution.
pub fn build_xi(
    ts: &TransferSystem,
    trace: &Trace,
    obf: &ObfuscationSequence,
    perm: &Permutation,
    adversaries: &BTreeSet<usize>,
    k: usize,
) -> Result<Vec<Vec<f64>>, PrivacyError> {
    let g = &trace.header.graph;
    let n = g.node_count();
    check_permutation(perm, n, adversaries)?;
    let r = trace.rounds.get(k).ok_or(ProtocolError::RoundOutOfRange(k))?;
    let d = trace.dim();
    let m = ts.nodes();
    let w = &trace.header.w;
    let scale = r.alpha * w.delta();
    if !(scale > 0.0) {
        return Err(PrivacyError::ConfigMismatch(
            "step size or mixing weight is zero".into(),
        ));
    }
    let mut xi = vec![vec![0.0; 2 * m]; d];
    for (local, &i) in ts.residual.to_original.iter().enumerate() {
        let pi = perm.apply(i);
        let closed = g.neighbors(i)?;
        for c in 0..d {
            let mut mixed = 0.0;
            for &j in &closed {
                mixed += w.get(i, j) * r.v[perm.apply(j) * d + c];
            }
            let mut incoming = (r.v_hat[pi * d + c] - mixed) / scale;
            let mut outgoing = 0.0;
            for &a in closed.iter().filter(|j| adversaries.contains(j)) {
                incoming -= obf.get(k, a, i).expect("edge perturbation")[c];
                outgoing -= boundary_rtilde(trace, k, perm, i, a)[c];
            }
            xi[c][local] = incoming;
            xi[c][m + local] = outgoing;
        }
    }
    Ok(xi)
}

/// Per-round diagnostics of a transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRound {
    pub k: usize,
    /// `max |T γ − ξ|` over coordinates.
    pub residual: f64,
    /// Smallest `rank (T | ξ)` over coordinates.
    pub rank_augmented: usize,
    /// `|𝟙ᵀξ¹ − 𝟙ᵀξ²| / (1 + ‖ξ‖)`, worst coordinate.
    pub xi_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transfer {
    pub rtilde: ObfuscationSequence,
    pub rounds: Vec<TransferRound>,
}

/// Builds `r̃` from `F`'s execution: adversarial senders keep `r`, honest →
/// adversarial entries reproduce the observed messages, and honest-internal
/// entries are the least-norm solution of `T γ = ξ`.
pub fn transfer_obfuscation(
    ts: &TransferSystem,
    trace: &Trace,
    obf: &ObfuscationSequence,
    perm: &Permutation,
    adversaries: &BTreeSet<usize>,
    rank_tol: f64,
) -> Result<Transfer, PrivacyError> {
    let g = &trace.header.graph;
    let d = trace.dim();
    let horizon = trace.rounds.len();
    let mut rtilde = ObfuscationSequence::zeros(g, horizon, d);
    let mut rounds = Vec::with_capacity(horizon);
    for k in 0..horizon {
        for &a in adversaries {
            for &j in g.adjacent(a)? {
                rtilde.set(k, a, j, obf.get(k, a, j).expect("edge perturbation"))?;
            }
        }
        for &i in &ts.residual.to_original {
            for &a in g.adjacent(i)?.iter().filter(|j| adversaries.contains(j)) {
                rtilde.set(k, i, a, &boundary_rtilde(trace, k, perm, i, a))?;
            }
        }

        let xi = build_xi(ts, trace, obf, perm, adversaries, k)?;
        let m = ts.nodes();
        let mut gammas = vec![vec![0.0; ts.slots.len()]; d];
        let mut residual: f64 = 0.0;
        let mut rank_aug = usize::MAX;
        let mut gap: f64 = 0.0;
        for c in 0..d {
            let b = &xi[c];
            let sum1: f64 = b[..m].iter().sum();
            let sum2: f64 = b[m..].iter().sum();
            gap = gap.max((sum1 - sum2).abs() / (1.0 + numerics::norm(b)));
            let aug = ts.t.hstack(&DenseMatrix::column_vector(b))?;
            rank_aug = rank_aug.min(numerics::rank(&aug, rank_tol)?);
            match numerics::least_norm_solve(&ts.t, b, SOLVE_TOL)? {
                LeastNorm::Solved { x, .. } => {
                    let tx = ts.t.mul_vec(&x)?;
                    let res = tx.iter().zip(b).fold(0.0f64, |acc, (p, q)| acc.max((p - q).abs()));
                    residual = residual.max(res);
                    gammas[c] = x;
                }
                LeastNorm::Infeasible { residual } => {
                    return Err(PrivacyError::Infeasible { round: k, residual });
                }
            }
        }
        for (s, &(from, to)) in ts.slots.iter().enumerate() {
            let value: Vec<f64> = (0..d).map(|c| gammas[c][s]).collect();
            rtilde.set(k, from, to, &value)?;
        }
        rounds.push(TransferRound {
            k,
            residual,
            rank_augmented: rank_aug,
            xi_gap: gap,
        });
    }
    rtilde.rebound();
    Ok(Transfer { rtilde, rounds })
}

/// Deviations between two executions as seen by the coalition, plus the
/// permutation relations on hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Indistinguishability {
    /// Worst difference in coalition locals, coalition inbox and aggregate.
    pub max_observable_deviation: f64,
    /// Worst violation of `x̃_i = x_{π(i)}`, `ṽ_i = v_{π(i)}`, `v̂̃_i = v̂_{π(i)}`.
    pub max_permutation_deviation: f64,
    /// Observable deviation per round.
    pub per_round: Vec<f64>,
    /// Largest `|x̃_i − x_i|` over honest players moved by `π`.
    pub hidden_difference: f64,
}

impl Indistinguishability {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_observable_deviation < tol && self.max_permutation_deviation < tol
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()))
}

pub fn verify_indistinguishable(
    original: &Trace,
    permuted: &Trace,
    adversaries: &BTreeSet<usize>,
    perm: &Permutation,
) -> Result<Indistinguishability, PrivacyError> {
    let (h0, h1) = (&original.header, &permuted.header);
    if h0.graph != h1.graph {
        return Err(PrivacyError::ConfigMismatch("different graphs".into()));
    }
    if h0.w != h1.w {
        return Err(PrivacyError::ConfigMismatch("different mixing matrices".into()));
    }
    if h0.schedule != h1.schedule {
        return Err(PrivacyError::ConfigMismatch("different step schedules".into()));
    }
    if h0.x0 != h1.x0 || h0.dim != h1.dim {
        return Err(PrivacyError::ConfigMismatch("different initial points".into()));
    }
    if original.rounds.len() != permuted.rounds.len() {
        return Err(PrivacyError::ConfigMismatch(format!(
            "horizons {} and {}",
            original.rounds.len(),
            permuted.rounds.len()
        )));
    }
    let n = original.players();
    check_permutation(perm, n, adversaries)?;
    let d = original.dim();
    let span = |i: usize| i * d..(i + 1) * d;

    let mut per_round = Vec::with_capacity(original.rounds.len());
    let mut perm_dev: f64 = 0.0;
    let mut hidden: f64 = 0.0;
    for (a, b) in original.rounds.iter().zip(&permuted.rounds) {
        let mut obs = max_diff(&a.xbar, &b.xbar);
        for &s in adversaries {
            obs = obs
                .max(max_diff(&a.x[span(s)], &b.x[span(s)]))
                .max(max_diff(&a.v[span(s)], &b.v[span(s)]))
                .max(max_diff(&a.v_hat[span(s)], &b.v_hat[span(s)]));
        }
        for (ma, mb) in a
            .messages
            .iter()
            .zip(&b.messages)
            .filter(|(m, _)| adversaries.contains(&m.to))
        {
            debug_assert_eq!((ma.from, ma.to), (mb.from, mb.to));
            obs = obs.max(max_diff(&ma.value, &mb.value));
        }
        per_round.push(obs);
        for i in 0..n {
            let pi = perm.apply(i);
            perm_dev = perm_dev
                .max(max_diff(&b.x[span(i)], &a.x[span(pi)]))
                .max(max_diff(&b.v[span(i)], &a.v[span(pi)]))
                .max(max_diff(&b.v_hat[span(i)], &a.v_hat[span(pi)]));
            if pi != i {
                hidden = hidden.max(max_diff(&b.x[span(i)], &a.x[span(i)]));
            }
        }
    }
    Ok(Indistinguishability {
        max_observable_deviation: per_round.iter().copied().fold(0.0, f64::max),
        max_permutation_deviation: perm_dev,
        per_round,
        hidden_difference: hidden,
    })
}

/// Everything needed to certify one transposition.
#[derive(Debug, Clone)]
pub struct CertificationSetup {
    pub spec: GameSpec,
    pub graph: Graph,
    pub w: MixingMatrix,
    pub schedule: StepSchedule,
    pub x0: Vec<f64>,
    pub adversaries: BTreeSet<usize>,
    pub rounds: usize,
    pub bound: f64,
    pub seed: u64,
    pub tolerance: f64,
    pub rank_tol: f64,
    /// Added to the first honest-internal `r̃` entry of round 0, as a negative
    /// control.
    pub corruption: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub structural_ok: bool,
    pub reasons: Vec<String>,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "rank_T")]
    pub rank_t: Option<usize>,
    #[serde(rename = "rank_T_expected")]
    pub rank_t_expected: usize,
    pub rank_augmented: Vec<usize>,
    pub transfer_feasible: bool,
    pub per_round_max_residual: Vec<f64>,
    pub max_xi_gap: f64,
    pub max_observable_deviation: f64,
    pub max_permutation_deviation: f64,
    pub hidden_difference: f64,
    pub max_rtilde: f64,
    pub max_rtilde_row_sum: f64,
    pub permutation: Vec<usize>,
    pub tolerance: f64,
    pub corrupted: bool,
    pub passed: bool,
}

impl Certificate {
    fn structural_failure(check: StructuralCheck, perm: &Permutation, tolerance: f64) -> Self {
        Certificate {
            structural_ok: false,
            reasons: check.reasons,
            m: check.residual_nodes,
            rank_t: None,
            rank_t_expected: (2 * check.residual_nodes).saturating_sub(1),
            rank_augmented: Vec::new(),
            transfer_feasible: false,
            per_round_max_residual: Vec::new(),
            max_xi_gap: 0.0,
            max_observable_deviation: 0.0,
            max_permutation_deviation: 0.0,
            hidden_difference: 0.0,
            max_rtilde: 0.0,
            max_rtilde_row_sum: 0.0,
            permutation: perm.as_slice().to_vec(),
            tolerance,
            corrupted: false,
            passed: false,
        }
    }
}

fn swap_for(setup: &CertificationSetup, i: usize, j: usize) -> Result<Permutation, PrivacyError> {
    let n = setup.graph.node_count();
    let invalid = |reason: &str| PrivacyError::InvalidSwap {
        i,
        j,
        reason: reason.into(),
    };
    if i == j {
        return Err(invalid("players must differ"));
    }
    if i >= n || j >= n {
        return Err(invalid("player out of range"));
    }
    if setup.adversaries.contains(&i) || setup.adversaries.contains(&j) {
        return Err(invalid("players must be honest"));
    }
    Ok(Permutation::swap(n, i, j)?)
}

/// Certifies one step: runs `spec` under `obf`, transfers to the game permuted
/// by `perm`, reruns, and compares.
fn certify_step(
    setup: &CertificationSetup,
    spec: &GameSpec,
    obf: &ObfuscationSequence,
    perm: &Permutation,
    corruption: Option<f64>,
) -> Result<(Certificate, GameSpec, ObfuscationSequence), PrivacyError> {
    let check = check_structural(&setup.graph, &setup.adversaries)?;
    if !check.ok {
        return Ok((
            Certificate::structural_failure(check, perm, setup.tolerance),
            spec.clone(),
            obf.clone(),
        ));
    }
    let ts = build_transfer_system(&setup.graph, &setup.adversaries)?;
    let rank = rank_certify(&ts, setup.rank_tol)?;

    let trace = run_private(
        spec,
        &setup.graph,
        &setup.w,
        setup.schedule,
        &setup.x0,
        setup.rounds,
        obf,
    )?;
    let (mut rtilde, rounds, feasible) =
        match transfer_obfuscation(&ts, &trace, obf, perm, &setup.adversaries, setup.rank_tol) {
            Ok(t) => (t.rtilde, t.rounds, true),
            Err(PrivacyError::Infeasible { .. }) => (obf.clone(), Vec::new(), false),
            Err(e) => return Err(e),
        };
    if let (Some(eps), Some(&(from, to))) = (corruption, ts.slots.first()) {
        if setup.rounds > 0 {
            let mut value = rtilde.get(0, from, to).expect("internal edge").to_vec();
            value[0] += eps;
            rtilde.set(0, from, to, &value)?;
            rtilde.rebound();
        }
    }

    let permuted = spec.permute(perm)?;
    let indist = if feasible {
        let trace_p = run_private(
            &permuted,
            &setup.graph,
            &setup.w,
            setup.schedule,
            &setup.x0,
            setup.rounds,
            &rtilde,
        )?;
        Some(verify_indistinguishable(&trace, &trace_p, &setup.adversaries, perm)?)
    } else {
        None
    };

    let rank_augmented: Vec<usize> = rounds.iter().map(|r| r.rank_augmented).collect();
    let per_round_max_residual: Vec<f64> = rounds.iter().map(|r| r.residual).collect();
    let max_xi_gap = rounds.iter().map(|r| r.xi_gap).fold(0.0, f64::max);
    let (obs, perm_dev, hidden) = indist.as_ref().map_or((f64::INFINITY, f64::INFINITY, 0.0), |x| {
        (
            x.max_observable_deviation,
            x.max_permutation_deviation,
            x.hidden_difference,
        )
    });
    let passed = rank.ok
        && feasible
        && rank_augmented.iter().all(|&r| r == rank.expected)
        && indist.as_ref().is_some_and(|x| x.passes(setup.tolerance));
    let cert = Certificate {
        structural_ok: true,
        reasons: Vec::new(),
        m: ts.nodes(),
        rank_t: Some(rank.rank),
        rank_t_expected: rank.expected,
        rank_augmented,
        transfer_feasible: feasible,
        per_round_max_residual,
        max_xi_gap,
        max_observable_deviation: obs,
        max_permutation_deviation: perm_dev,
        hidden_difference: hidden,
        max_rtilde: rtilde.max_abs(),
        max_rtilde_row_sum: rtilde.max_row_sum(),
        permutation: perm.as_slice().to_vec(),
        tolerance: setup.tolerance,
        corrupted: corruption.is_some(),
        passed,
    };
    Ok((cert, permuted, rtilde))
}

/// Certifies that swapping honest players `i` and `j` is invisible to the
/// coalition over the configured horizon.
pub fn certify(setup: &CertificationSetup, i: usize, j: usize) -> Result<Certificate, PrivacyError> {
    let perm = swap_for(setup, i, j)?;
    let obf = gen_obfuscation(&setup.graph, setup.bound, setup.rounds, setup.spec.dim(), setup.seed)?;
    certify_step(setup, &setup.spec, &obf, &perm, setup.corruption).map(|(c, _, _)| c)
}

/// Certifies a general honest-player permutation as a chain of
/// transpositions. Step `s` compares the game permuted by the first `s−1`
/// transpositions (run under the previously transferred perturbations) with
/// the game permuted by the first `s`.
pub fn certify_permutation(setup: &CertificationSetup, perm: &Permutation) -> Result<Vec<Certificate>, PrivacyError> {
    let n = setup.graph.node_count();
    check_permutation(perm, n, &setup.adversaries)?;
    let mut spec = setup.spec.clone();
    let mut obf = gen_obfuscation(&setup.graph, setup.bound, setup.rounds, spec.dim(), setup.seed)?;
    let mut out = Vec::new();
    for (step, (i, j)) in perm.transpositions().into_iter().enumerate() {
        let swap = swap_for(setup, i, j)?;
        let corruption = if step == 0 { setup.corruption } else { None };
        let (cert, next_spec, next_obf) = certify_step(setup, &spec, &obf, &swap, corruption)?;
        let stop = !cert.passed;
        out.push(cert);
        if stop {
            break;
        }
        spec = next_spec;
        obf = next_obf;
    }
    Ok(out)
}
