use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ProtocolError;
use crate::graph::Graph;

/// Per-round, per-node perturbations `r^k_{ij}` for every non-self neighbor
/// `j` of `i`. Self perturbations are implicitly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObfuscationSequence {
    bound: f64,
    seed: Option<u64>,
    dim: usize,
    /// Non-self neighbors of each node, ascending.
    neighbors: Vec<Vec<usize>>,
    /// `values[k][i]` holds `neighbors[i].len() * dim` entries.
    values: Vec<Vec<Vec<f64>>>,
}

impl ObfuscationSequence {
    /// All-zero sequence with the layout of `g`.
    pub fn zeros(g: &Graph, rounds: usize, dim: usize) -> Self {
        let neighbors: Vec<Vec<usize>> = (0..g.node_count())
            .map(|i| g.adjacent(i).expect("node in range").to_vec())
            .collect();
        let values = (0..rounds)
            .map(|_| neighbors.iter().map(|nb| vec![0.0; nb.len() * dim]).collect())
            .collect();
        ObfuscationSequence {
            bound: 0.0,
            seed: None,
            dim,
            neighbors,
            values,
        }
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rounds(&self) -> usize {
        self.values.len()
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        self.neighbors[i].binary_search(&j).ok()
    }

    /// `r^k_{ij}` for an edge `i → j`; `None` for `j = i` and non-neighbors.
    pub fn get(&self, k: usize, i: usize, j: usize) -> Option<&[f64]> {
        let t = self.slot(i, j)?;
        Some(&self.values[k][i][t * self.dim..(t + 1) * self.dim])
    }

    /// Like [`get`](Self::get) but with the zero self-perturbation filled in.
    pub fn value(&self, k: usize, i: usize, j: usize) -> Option<Vec<f64>> {
        if i == j {
            Some(vec![0.0; self.dim])
        } else {
            self.get(k, i, j).map(<[f64]>::to_vec)
        }
    }

    /// Overwrites `r^k_{ij}` for an edge `i → j`.
    pub fn set(&mut self, k: usize, i: usize, j: usize, value: &[f64]) -> Result<(), ProtocolError> {
        let d = self.dim;
        if value.len() != d {
            return Err(ProtocolError::Dimension(format!(
                "perturbation of length {} for dimension {d}",
                value.len()
            )));
        }
        let t = self
            .slot(i, j)
            .ok_or_else(|| ProtocolError::ObfuscationMismatch(format!("no edge {i} -> {j}")))?;
        self.values[k][i][t * d..(t + 1) * d].copy_from_slice(value);
        Ok(())
    }

    /// Replaces the declared bound with the largest stored magnitude.
    pub fn rebound(&mut self) {
        self.bound = self.max_abs();
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest `|Σ_j r^k_{ij}|` over all rounds, nodes and components.
    pub fn max_row_sum(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for round in &self.values {
            for row in round {
                for c in 0..d {
                    let s: f64 = row.iter().skip(c).step_by(d).sum();
                    worst = worst.max(s.abs());
                }
            }
        }
        worst
    }

    /// Hex SHA-256 over the layout and every stored value.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("dim={};nodes={}\n", self.dim, self.neighbors.len()));
        for nb in &self.neighbors {
            h.update(format!("{nb:?}"));
        }
        for v in self.values.iter().flatten().flatten() {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Checks that the layout matches `g` and the horizon covers `rounds`.
    pub fn validate_for(&self, g: &Graph, rounds: usize, dim: usize) -> Result<(), ProtocolError> {
        if self.rounds() < rounds {
            return Err(ProtocolError::ObfuscationTooShort {
                needed: rounds,
                available: self.rounds(),
            });
        }
        if self.dim != dim {
            return Err(ProtocolError::ObfuscationMismatch(format!(
                "sequence dimension {} but game dimension {dim}",
                self.dim
            )));
        }
        let same_layout = self.neighbors.len() == g.node_count()
            && self
                .neighbors
                .iter()
                .enumerate()
                .all(|(i, nb)| g.adjacent(i).map(|a| a == nb.as_slice()).unwrap_or(false));
        if !same_layout {
            return Err(ProtocolError::ObfuscationMismatch(
                "neighbor layout differs from the graph".into(),
            ));
        }
        let slack = self.bound * 1e-12;
        if self.max_abs() > self.bound + slack {
            return Err(ProtocolError::ObfuscationMismatch(format!(
                "entries reach {} above the declared bound {}",
                self.max_abs(),
                self.bound
            )));
        }
        Ok(())
    }
}

/// Draws balanced bounded perturbations. Node `i` with non-self neighbors
/// `j_1 < … < j_m` draws `u_t ~ U[−Δ/2, Δ/2]` and sends `r_{i,j_t} = u_t −
/// u_{t+1 mod m}`; the last entry is stored as the negated sum of the others
/// so the row sums to zero exactly. Each `(node, round)` pair has its own
/// ChaCha stream derived from `seed`.
pub fn gen_obfuscation(
    g: &Graph,
    bound: f64,
    rounds: usize,
    dim: usize,
    seed: u64,
) -> Result<ObfuscationSequence, ProtocolError> {
    if !(bound >= 0.0) || !bound.is_finite() {
        return Err(ProtocolError::Invalid(format!(
            "obfuscation bound {bound} must be finite and >= 0"
        )));
    }
    if dim == 0 {
        return Err(ProtocolError::Dimension("dimension must be positive".into()));
    }
    let mut seq = ObfuscationSequence::zeros(g, rounds, dim);
    seq.bound = bound;
    seq.seed = Some(seed);
    if bound == 0.0 {
        return Ok(seq);
    }
    let half = bound / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (k, round) in seq.values.iter_mut().enumerate() {
        for (i, row) in round.iter_mut().enumerate() {
            let m = seq.neighbors[i].len();
            if m < 2 {
                continue;
            }
            rng.set_stream(((i as u64) << 32) | k as u64);
            rng.set_word_pos(0);
            let u: Vec<f64> = (0..m * dim).map(|_| rng.random_range(-half..=half)).collect();
            for c in 0..dim {
                let mut sum = 0.0;
                for t in 0..m - 1 {
                    let r = u[t * dim + c] - u[(t + 1) * dim + c];
                    row[t * dim + c] = r;
                    sum += r;
                }
                row[(m - 1) * dim + c] = -sum;
            }
        }
    }
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_bound_gives_zero_sequence() {
        let seq = gen_obfuscation(&Graph::complete(5).unwrap(), 0.0, 20, 1, 3).unwrap();
        assert_eq!(seq.max_abs(), 0.0);
        assert_eq!(seq.rounds(), 20);
    }

    #[test]
    fn leaf_perturbation_is_zero() {
        let g = Graph::star(5).unwrap();
        let seq = gen_obfuscation(&g, 10.0, 30, 1, 1).unwrap();
        for k in 0..30 {
            for leaf in 1..5 {
                assert_eq!(seq.get(k, leaf, 0).unwrap(), &[0.0]);
            }
            assert!(seq.get(k, 0, 1).unwrap()[0] != 0.0);
        }
    }

    #[test]
    fn self_entry_is_zero_and_non_edges_missing() {
        let g = Graph::path(3).unwrap();
        let seq = gen_obfuscation(&g, 1.0, 2, 2, 1).unwrap();
        assert_eq!(seq.value(0, 1, 1).unwrap(), vec![0.0, 0.0]);
        assert!(seq.get(0, 1, 1).is_none());
        assert!(seq.get(0, 0, 2).is_none());
    }

    #[test]
    fn rows_balance_and_respect_bound() {
        for seed in 0..5 {
            let g = Graph::random_connected_nonbipartite(10, 8, seed).unwrap();
            for dim in [1, 3] {
                let seq = gen_obfuscation(&g, 10.0, 100, dim, seed).unwrap();
                assert!(seq.max_row_sum() <= 1e-15);
                assert!(seq.max_abs() <= 10.0);
                seq.validate_for(&g, 100, dim).unwrap();
            }
        }
    }

    #[test]
    fn cyclic_difference_structure() {
        // u_t − u_{t+1} telescopes, so consecutive partial sums equal u_1 − u_{t+1}
        // and every partial sum stays within the bound.
        let g = Graph::complete(6).unwrap();
        let seq = gen_obfuscation(&g, 4.0, 10, 1, 9).unwrap();
        for k in 0..10 {
            for i in 0..6 {
                let mut partial = 0.0f64;
                for &j in seq.neighbors(i) {
                    partial += seq.get(k, i, j).unwrap()[0];
                    assert!(partial.abs() <= 4.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn seeding_is_reproducible_and_distinct() {
        let g = Graph::complete(4).unwrap();
        let a = gen_obfuscation(&g, 2.0, 5, 1, 7).unwrap();
        let b = gen_obfuscation(&g, 2.0, 5, 1, 7).unwrap();
        let c = gen_obfuscation(&g, 2.0, 5, 1, 8).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        // A longer horizon extends the sequence without changing earlier rounds.
        let long = gen_obfuscation(&g, 2.0, 9, 1, 7).unwrap();
        for k in 0..5 {
            for i in 0..4 {
                for &j in a.neighbors(i) {
                    assert_eq!(a.get(k, i, j), long.get(k, i, j));
                }
            }
        }
    }

    #[test]
    fn negative_bound_rejected() {
        assert!(gen_obfuscation(&Graph::complete(3).unwrap(), -1.0, 2, 1, 0).is_err());
    }

    #[test]
    fn layout_mismatch_detected() {
        let seq = gen_obfuscation(&Graph::complete(4).unwrap(), 1.0, 3, 1, 0).unwrap();
        assert!(seq.validate_for(&Graph::cycle(4).unwrap(), 3, 1).is_err());
        assert!(seq.validate_for(&Graph::complete(4).unwrap(), 4, 1).is_err());
        let mut over = seq.clone();
        over.set(0, 0, 1, &[5.0]).unwrap();
        assert!(over.validate_for(&Graph::complete(4).unwrap(), 3, 1).is_err());
        over.rebound();
        assert!(over.validate_for(&Graph::complete(4).unwrap(), 3, 1).is_ok());
    }
}
