use serde::{Deserialize, Serialize};

use super::{ProtocolError, Trace};
use crate::game::GameSpec;
use crate::numerics;

/// `‖y^k − v̂^k_i‖` for every node, with `y^k` the mean of the estimates.
pub fn consensus_error(trace: &Trace, k: usize) -> Result<Vec<f64>, ProtocolError> {
    let r = trace.rounds.get(k).ok_or(ProtocolError::RoundOutOfRange(k))?;
    let (n, d) = (trace.players(), trace.dim());
    let mut y = vec![0.0; d];
    for chunk in r.v.chunks(d) {
        for (a, v) in y.iter_mut().zip(chunk) {
            *a += v;
        }
    }
    for a in &mut y {
        *a /= n as f64;
    }
    Ok(r.v_hat
        .chunks(d)
        .map(|vh| vh.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .collect())
}

/// Mean over players of `‖x_i − x*_i‖` for a flat profile.
pub fn mean_distance(x: &[f64], xstar: &[f64], dim: usize) -> f64 {
    let n = x.len() / dim;
    x.chunks(dim)
        .zip(xstar.chunks(dim))
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
        .sum::<f64>()
        / n as f64
}

/// Mean distance to `xstar` at every recorded round.
pub fn distance_to_equilibrium(trace: &Trace, xstar: &[f64]) -> Result<Vec<f64>, ProtocolError> {
    let expected = trace.players() * trace.dim();
    if xstar.len() != expected {
        return Err(ProtocolError::Dimension(format!(
            "equilibrium of length {} for a profile of length {expected}",
            xstar.len()
        )));
    }
    Ok(trace
        .rounds
        .iter()
        .map(|r| mean_distance(&r.x, xstar, trace.dim()))
        .collect())
}

/// Tail length used by the summability verdict: the final tenth of the run.
fn tail_start(len: usize) -> usize {
    len - len.div_ceil(10)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummabilityReport {
    /// Second-largest eigenvalue modulus of `W`.
    pub beta: f64,
    /// Largest gradient norm observed over sampled profiles.
    pub gradient_bound: f64,
    pub bound: f64,
    /// `α^k · max_i ‖y^k − v̂^k_i‖`.
    pub increments: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// `β^k M + N(C+Δ) Σ_{s=1}^{k} β^{k−s} α^{s−1} + Δ α^k` with `M = max|v^0|`.
    pub envelope: Vec<f64>,
    pub tail_start: usize,
    pub tail_max_increment: f64,
    /// All tail increments below `1e−6`.
    pub summable: bool,
}

/// Partial sums of the weighted consensus error against the analytic envelope.
pub fn verify_consensus_summability(trace: &Trace, spec: &GameSpec) -> Result<SummabilityReport, ProtocolError> {
    const MIN_LEN: usize = 50;
    let len = trace.rounds.len();
    if len < MIN_LEN {
        return Err(ProtocolError::TraceTooShort { len, min: MIN_LEN });
    }
    let eig = numerics::sym_eigenvalues(trace.header.w.matrix()).map_err(|e| ProtocolError::Invalid(e.to_string()))?;
    let mut moduli: Vec<f64> = eig.iter().map(|e| e.abs()).collect();
    moduli.sort_by(f64::total_cmp);
    let beta = if moduli.len() > 1 {
        moduli[moduli.len() - 2]
    } else {
        0.0
    };

    let c = spec.sampled_gradient_bound(1000, 0);
    let delta = trace.header.bound;
    let n = trace.players() as f64;
    let m0 = trace.rounds[0].v.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut increments = Vec::with_capacity(len);
    let mut partial_sums = Vec::with_capacity(len);
    let mut envelope = Vec::with_capacity(len);
    let mut total = 0.0;
    let mut conv = 0.0;
    let mut beta_pow = 1.0;
    for (k, r) in trace.rounds.iter().enumerate() {
        let worst = consensus_error(trace, k)?.into_iter().fold(0.0f64, f64::max);
        let inc = r.alpha * worst;
        total += inc;
        increments.push(inc);
        partial_sums.push(total);
        if k > 0 {
            conv = beta * conv + trace.rounds[k - 1].alpha;
            beta_pow *= beta;
        }
        envelope.push(beta_pow * m0 + n * (c + delta) * conv + delta * r.alpha);
    }
    let start = tail_start(len);
    let tail_max = increments[start..].iter().copied().fold(0.0f64, f64::max);
    Ok(SummabilityReport {
        beta,
        gradient_bound: c,
        bound: delta,
        increments,
        partial_sums,
        envelope,
        tail_start: start,
        tail_max_increment: tail_max,
        summable: tail_max < 1e-6,
    })
}

/// One line of the plotting summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub mean_distance: f64,
    pub max_consensus_error: f64,
}

pub fn convergence_rows(trace: &Trace, xstar: &[f64]) -> Result<Vec<ConvergenceRow>, ProtocolError> {
    let dist = distance_to_equilibrium(trace, xstar)?;
    dist.into_iter()
        .enumerate()
        .map(|(k, mean_distance)| {
            let worst = consensus_error(trace, k)?.into_iter().fold(0.0f64, f64::max);
            Ok(ConvergenceRow {
                k,
                mean_distance,
                max_consensus_error: worst,
            })
        })
        .collect()
}
