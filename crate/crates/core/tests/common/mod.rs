#![allow(dead_code)]

use std::collections::BTreeSet;

use aggnet_core::game::{CournotGame, StrategyBox};
use aggnet_core::graph::{Graph, MixingMatrix};
use aggnet_core::protocol::{gen_obfuscation, run_baseline, run_private, StepSchedule, Trace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn set(nodes: &[usize]) -> BTreeSet<usize> {
    nodes.iter().copied().collect()
}

pub fn canonical_game() -> CournotGame {
    CournotGame::new(
        6.0,
        0.5,
        vec![0.3, 0.1, 0.45, 0.2, 0.25],
        vec![0.7, 0.2, 0.5, 0.9, 0.4],
        vec![StrategyBox::interval(0.0, 5.0).unwrap(); 5],
    )
    .unwrap()
}

pub fn sampled_game(n: usize, b: f64, seed: u64) -> CournotGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CournotGame::sample(
        n,
        6.0,
        b,
        (0.0, 0.5),
        (0.0, 1.0),
        StrategyBox::interval(0.0, 5.0).unwrap(),
        &mut rng,
    )
    .unwrap()
}

/// Runs `game` on `g`; `bound = None` selects the baseline protocol.
pub fn run(game: &CournotGame, g: &Graph, delta: f64, rounds: usize, bound: Option<f64>, seed: u64) -> Trace {
    let w = MixingMatrix::new(g, delta).unwrap();
    let spec = game.to_spec();
    let s = StepSchedule::default();
    let mut t = match bound {
        None => run_baseline(&spec, g, &w, s, &[1.0], rounds).unwrap(),
        Some(b) => {
            let obf = gen_obfuscation(g, b, rounds, 1, seed).unwrap();
            run_private(&spec, g, &w, s, &[1.0], rounds, &obf).unwrap()
        }
    };
    t.header.game = Some(game.clone());
    t
}
