mod common;

use std::collections::BTreeSet;

use aggnet_core::game::Permutation;
use aggnet_core::graph::{Graph, MixingMatrix};
use aggnet_core::numerics;
use aggnet_core::privacy::{build_transfer_system, build_xi, rank_certify, transfer_system_for};
use aggnet_core::protocol::{gen_obfuscation, run_private, StepSchedule};
use common::{sampled_game, set};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOLERANCES: [f64; 3] = [1e-12, 1e-9, 1e-6];

fn residual_rank(g: &Graph, tol: f64) -> (usize, usize) {
    let ts = transfer_system_for(g.restrict(&BTreeSet::new()).unwrap()).unwrap();
    let r = rank_certify(&ts, tol).unwrap();
    (r.rank, g.node_count())
}

/// Connected bipartite graph: random tree plus random edges between sides.
fn random_bipartite(m: usize, rng: &mut ChaCha8Rng) -> Graph {
    let mut side = vec![false; m];
    let mut edges = Vec::new();
    for v in 1..m {
        let parent = rng.random_range(0..v);
        side[v] = !side[parent];
        edges.push((parent, v));
    }
    for _ in 0..m {
        let (a, b) = (rng.random_range(0..m), rng.random_range(0..m));
        if side[a] != side[b] {
            edges.push((a.min(b), a.max(b)));
        }
    }
    Graph::new(m, edges).unwrap()
}

#[test]
fn rank_is_2m_minus_1_on_non_bipartite_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..60 {
        let m = rng.random_range(3..=12);
        let g = Graph::random_connected_nonbipartite(m, rng.random_range(0..m), case).unwrap();
        assert!(g.is_connected() && !g.is_bipartite());
        for tol in TOLERANCES {
            let (rank, m) = residual_rank(&g, tol);
            assert_eq!(rank, 2 * m - 1, "case {case}, tol {tol}");
        }
    }
}

#[test]
fn rank_is_2m_minus_2_on_bipartite_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for case in 0..25 {
        let m = rng.random_range(2..=12);
        let g = random_bipartite(m, &mut rng);
        assert!(g.is_connected() && g.is_bipartite());
        for tol in TOLERANCES {
            let (rank, m) = residual_rank(&g, tol);
            assert_eq!(rank, 2 * m - 2, "case {case}, tol {tol}");
        }
    }
}

#[test]
fn residual_after_deleting_adversaries_obeys_rank_law() {
    // K6 minus two adversaries leaves K4; a 7-cycle minus one leaves a path
    let k6 = build_transfer_system(&Graph::complete(6).unwrap(), &set(&[0, 3])).unwrap();
    assert_eq!(rank_certify(&k6, 1e-9).unwrap().rank, 7);
    let c7 = build_transfer_system(&Graph::cycle(7).unwrap(), &set(&[2])).unwrap();
    assert_eq!(rank_certify(&c7, 1e-9).unwrap().rank, 10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn xi_is_consistent_every_round(n in 4usize..9, extra in 1usize..8, graph_seed in 0u64..1000, seed in 0u64..1000, bound in 0.0f64..50.0) {
        let g = Graph::random_connected_nonbipartite(n, extra, graph_seed).unwrap();
        // pick an adversary whose removal keeps the honest graph valid
        let adversary = (0..n).find(|&a| {
            let r = g.restrict(&set(&[a])).unwrap().graph;
            r.is_connected() && !r.is_bipartite()
        });
        prop_assume!(adversary.is_some());
        let adversaries = set(&[adversary.unwrap()]);
        let honest: Vec<usize> = (0..n).filter(|i| !adversaries.contains(i)).collect();
        let perm = Permutation::swap(n, honest[0], honest[1]).unwrap();

        let w = MixingMatrix::new(&g, 0.9 / (n - 1) as f64).unwrap();
        let game = sampled_game(n, 0.1, seed);
        let obf = gen_obfuscation(&g, bound, 40, 1, seed).unwrap();
        let trace = run_private(&game.to_spec(), &g, &w, StepSchedule::default(), &[1.0], 40, &obf).unwrap();
        let ts = build_transfer_system(&g, &adversaries).unwrap();
        let m = ts.nodes();
        for k in 0..40 {
            let xi = &build_xi(&ts, &trace, &obf, &perm, &adversaries, k).unwrap()[0];
            let gap = (xi[..m].iter().sum::<f64>() - xi[m..].iter().sum::<f64>()).abs();
            prop_assert!(gap < 1e-8 * (1.0 + numerics::norm(xi)), "round {}: gap {}", k, gap);
            let aug = ts.t.hstack(&numerics::DenseMatrix::column_vector(xi)).unwrap();
            prop_assert_eq!(numerics::rank(&aug, 1e-9).unwrap(), 2 * m - 1);
        }
    }
}
