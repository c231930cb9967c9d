//! Synchronous round engine for the plain consensus-tracking iteration and
//! its obfuscated variant, with trace recording and diagnostics.
//!
//! One round `k` with step `α = α^k`:
//! 1. node `i` sends `v_{ij} = v_i + α r_{ij}` to every closed neighbor `j`
//!    (`r ≡ 0` in baseline mode);
//! 2. `v̂_i = Σ_j W_ij v_{ji}`, summed over `j` in ascending order;
//! 3. `x_i⁺ = proj_{X_i}(x_i − α ∇f_i(x_i, N v̂_i))`;
//! 4. `v_i⁺ = v̂_i + x_i⁺ − x_i`.

mod diagnostics;
mod io;
mod obfuscation;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diagnostics::{
    consensus_error, convergence_rows, distance_to_equilibrium, mean_distance, verify_consensus_summability,
    ConvergenceRow, SummabilityReport,
};
pub use io::{read_jsonl, write_convergence_csv, write_jsonl};
pub use obfuscation::{gen_obfuscation, ObfuscationSequence};

use crate::game::{CournotGame, GameError, GameSpec};
use crate::graph::{Graph, GraphError, MixingMatrix};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("step schedule needs alpha0 > 0 and p in (0.5, 1], got alpha0={alpha0}, p={p}")]
    Schedule { alpha0: f64, p: f64 },
    #[error("initial point {0:?} is not in every strategy box")]
    InfeasibleStart(Vec<f64>),
    #[error("mixing matrix does not match the graph")]
    MixingMismatch,
    #[error("obfuscation covers {available} rounds, {needed} needed")]
    ObfuscationTooShort { needed: usize, available: usize },
    #[error("obfuscation does not fit the run: {0}")]
    ObfuscationMismatch(String),
    #[error("trace has {len} rounds, at least {min} needed")]
    TraceTooShort { len: usize, min: usize },
    #[error("round {0} out of range")]
    RoundOutOfRange(usize),
    #[error("malformed trace at line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `α^k = alpha0 · (k+1)^{−p}` with `p ∈ (0.5, 1]`, which keeps `Σα = ∞`
/// and `Σα² < ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub struct StepSchedule {
    alpha0: f64,
    p: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSchedule {
    alpha0: f64,
    p: f64,
}

impl TryFrom<RawSchedule> for StepSchedule {
    type Error = ProtocolError;

    fn try_from(r: RawSchedule) -> Result<Self, ProtocolError> {
        StepSchedule::new(r.alpha0, r.p)
    }
}

impl From<StepSchedule> for RawSchedule {
    fn from(s: StepSchedule) -> Self {
        RawSchedule {
            alpha0: s.alpha0,
            p: s.p,
        }
    }
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule { alpha0: 1.0, p: 0.51 }
    }
}

impl StepSchedule {
    pub fn new(alpha0: f64, p: f64) -> Result<Self, ProtocolError> {
        if !(alpha0 > 0.0 && alpha0.is_finite() && p > 0.5 && p <= 1.0) {
            return Err(ProtocolError::Schedule { alpha0, p });
        }
        Ok(StepSchedule { alpha0, p })
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn step_size(&self, k: usize) -> f64 {
        self.alpha0 * ((k + 1) as f64).powf(-self.p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Private,
}

/// A transmitted estimate `v^k_{from→to}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub from: usize,
    pub to: usize,
    pub value: Vec<f64>,
}

/// Everything that happened in round `k`. Per-player vectors are flat with
/// `dim` entries per player; `messages` is ordered by `(from, to)` and
/// includes each node's message to itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub k: usize,
    pub alpha: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub v_hat: Vec<f64>,
    /// Gradient each player evaluated at its own estimate `N v̂_i`.
    pub grad: Vec<f64>,
    pub messages: Vec<Message>,
    pub xbar: Vec<f64>,
}

impl RoundRecord {
    pub fn player<'a>(&self, field: &'a [f64], i: usize, dim: usize) -> &'a [f64] {
        &field[i * dim..(i + 1) * dim]
    }

    pub fn message(&self, from: usize, to: usize) -> Option<&Message> {
        self.messages
            .binary_search_by(|m| (m.from, m.to).cmp(&(from, to)))
            .ok()
            .map(|idx| &self.messages[idx])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub game_hash: String,
    /// Cournot coefficients when the game is a Cournot game.
    pub game: Option<CournotGame>,
    pub graph: Graph,
    pub w: MixingMatrix,
    pub schedule: StepSchedule,
    pub mode: Mode,
    pub dim: usize,
    pub x0: Vec<f64>,
    pub rounds: usize,
    /// Declared perturbation bound (zero in baseline mode).
    pub bound: f64,
    pub obfuscation_seed: Option<u64>,
    pub obfuscation_digest: Option<String>,
    /// Hash of the experiment configuration that produced the trace.
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub header: TraceHeader,
    pub rounds: Vec<RoundRecord>,
}

impl Trace {
    pub fn players(&self) -> usize {
        self.header.graph.node_count()
    }

    pub fn dim(&self) -> usize {
        self.header.dim
    }
}

/// Round-by-round execution; yields one [`RoundRecord`] per round.
pub struct Simulation<'a> {
    spec: &'a GameSpec,
    w: &'a MixingMatrix,
    schedule: StepSchedule,
    obf: Option<&'a ObfuscationSequence>,
    closed: Vec<Vec<usize>>,
    rounds: usize,
    k: usize,
    x: Vec<f64>,
    v: Vec<f64>,
}

impl<'a> Simulation<'a> {
    pub fn new(
        spec: &'a GameSpec,
        g: &Graph,
        w: &'a MixingMatrix,
        schedule: StepSchedule,
        x0: &[f64],
        rounds: usize,
        obf: Option<&'a ObfuscationSequence>,
    ) -> Result<Self, ProtocolError> {
        let n = g.node_count();
        let d = spec.dim();
        if spec.players() != n {
            return Err(ProtocolError::Dimension(format!(
                "{} players on {n} nodes",
                spec.players()
            )));
        }
        if x0.len() != d {
            return Err(ProtocolError::Dimension(format!(
                "initial point of length {} for dimension {d}",
                x0.len()
            )));
        }
        if !w.matches(g) {
            return Err(ProtocolError::MixingMismatch);
        }
        if !spec.common_point_feasible(x0) {
            return Err(ProtocolError::InfeasibleStart(x0.to_vec()));
        }
        if let Some(seq) = obf {
            seq.validate_for(g, rounds, d)?;
        }
        let closed = (0..n).map(|i| g.neighbors(i)).collect::<Result<_, _>>()?;
        let start: Vec<f64> = x0.iter().copied().cycle().take(n * d).collect();
        Ok(Simulation {
            spec,
            w,
            schedule,
            obf,
            closed,
            rounds,
            k: 0,
            x: start.clone(),
            v: start,
        })
    }

    /// Current `(x, v)` state, i.e. the state entering the next round.
    pub fn state(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.v)
    }

    fn step(&mut self) -> RoundRecord {
        let n = self.closed.len();
        let d = self.spec.dim();
        let k = self.k;
        let alpha = self.schedule.step_size(k);
        let zero = vec![0.0; d];

        let mut messages = Vec::with_capacity(self.closed.iter().map(Vec::len).sum());
        for i in 0..n {
            let vi = &self.v[i * d..(i + 1) * d];
            for &j in &self.closed[i] {
                let r = match self.obf {
                    Some(seq) if j != i => seq.get(k, i, j).expect("validated layout"),
                    _ => &zero[..],
                };
                let value = match self.obf {
                    Some(_) => vi.iter().zip(r).map(|(v, r)| v + alpha * r).collect(),
                    None => vi.to_vec(),
                };
                messages.push(Message { from: i, to: j, value });
            }
        }

        // Incoming messages for node i, indexed by sender.
        let mut inbox: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (idx, m) in messages.iter().enumerate() {
            inbox[m.to].push((m.from, idx));
        }

        let scale = n as f64;
        let mut v_hat = vec![0.0; n * d];
        let mut grad = vec![0.0; n * d];
        let mut x_next = vec![0.0; n * d];
        let mut v_next = vec![0.0; n * d];
        let mut estimate = vec![0.0; d];
        for i in 0..n {
            let vh = &mut v_hat[i * d..(i + 1) * d];
            for &(j, idx) in &inbox[i] {
                let wij = self.w.get(i, j);
                for (acc, val) in vh.iter_mut().zip(&messages[idx].value) {
                    *acc += wij * val;
                }
            }
            for (e, h) in estimate.iter_mut().zip(vh.iter()) {
                *e = scale * h;
            }
            let xi = &self.x[i * d..(i + 1) * d];
            let gi = &mut grad[i * d..(i + 1) * d];
            self.spec.gradient(i, xi, &estimate, gi);
            let xn = &mut x_next[i * d..(i + 1) * d];
            for c in 0..d {
                xn[c] = xi[c] - alpha * gi[c];
            }
            self.spec.strategy_box(i).project_in_place(xn);
            for c in 0..d {
                v_next[i * d + c] = vh[c] + xn[c] - xi[c];
            }
        }

        let mut xbar = vec![0.0; d];
        for chunk in self.x.chunks(d) {
            for (a, v) in xbar.iter_mut().zip(chunk) {
                *a += v;
            }
        }

        let record = RoundRecord {
            k,
            alpha,
            x: std::mem::replace(&mut self.x, x_next),
            v: std::mem::replace(&mut self.v, v_next),
            v_hat,
            grad,
            messages,
            xbar,
        };
        self.k += 1;
        record
    }
}

impl Iterator for Simulation<'_> {
    type Item = RoundRecord;

    fn next(&mut self) -> Option<RoundRecord> {
        (self.k < self.rounds).then(|| self.step())
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.rounds - self.k;
        (left, Some(left))
    }
}

fn header(
    spec: &GameSpec,
    g: &Graph,
    w: &MixingMatrix,
    schedule: StepSchedule,
    x0: &[f64],
    rounds: usize,
    obf: Option<&ObfuscationSequence>,
) -> TraceHeader {
    TraceHeader {
        game_hash: spec.fingerprint(),
        game: None,
        graph: g.clone(),
        w: w.clone(),
        schedule,
        mode: if obf.is_some() { Mode::Private } else { Mode::Baseline },
        dim: spec.dim(),
        x0: x0.to_vec(),
        rounds,
        bound: obf.map_or(0.0, ObfuscationSequence::bound),
        obfuscation_seed: obf.and_then(ObfuscationSequence::seed),
        obfuscation_digest: obf.map(ObfuscationSequence::digest),
        config_hash: None,
    }
}

/// Runs the unperturbed protocol for `rounds` rounds.
pub fn run_baseline(
    spec: &GameSpec,
    g: &Graph,
    w: &MixingMatrix,
    schedule: StepSchedule,
    x0: &[f64],
    rounds: usize,
) -> Result<Trace, ProtocolError> {
    let sim = Simulation::new(spec, g, w, schedule, x0, rounds, None)?;
    Ok(Trace {
        header: header(spec, g, w, schedule, x0, rounds, None),
        rounds: sim.collect(),
    })
}

/// Runs the obfuscated protocol, perturbing every outgoing estimate by
/// `α^k r^k_{ij}`.
pub fn run_private(
    spec: &GameSpec,
    g: &Graph,
    w: &MixingMatrix,
    schedule: StepSchedule,
    x0: &[f64],
    rounds: usize,
    obf: &ObfuscationSequence,
) -> Result<Trace, ProtocolError> {
    let sim = Simulation::new(spec, g, w, schedule, x0, rounds, Some(obf))?;
    Ok(Trace {
        header: header(spec, g, w, schedule, x0, rounds, Some(obf)),
        rounds: sim.collect(),
    })
}
