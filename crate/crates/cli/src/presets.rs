use std::str::FromStr;

use aggnet_core::game::{CournotGame, StrategyBox};
use aggnet_core::protocol::Mode;

use crate::config::{ExperimentConfig, GameSource, GraphSource, Outputs, ScheduleConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Ten players on a seeded random graph with sampled costs.
    PaperFig3,
    /// The five-node path-like network with fixed asymmetric costs.
    Canonical5,
    /// Complete graph on five nodes, set up for certification.
    K5Cert,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::PaperFig3, Preset::Canonical5, Preset::K5Cert];

    pub fn name(self) -> &'static str {
        match self {
            Preset::PaperFig3 => "paper-fig3",
            Preset::Canonical5 => "canonical-5",
            Preset::K5Cert => "k5-cert",
        }
    }

    pub fn config(self) -> ExperimentConfig {
        match self {
            Preset::PaperFig3 => ExperimentConfig {
                game: GameSource::Sampled {
                    n: None,
                    a: 6.0,
                    b: 0.1,
                    zeta2: [0.0, 0.5],
                    zeta1: [0.0, 1.0],
                    strategy_box: [0.0, 5.0],
                    seed: None,
                },
                graph: GraphSource::RandomConnectedNonbipartite {
                    n: 10,
                    extra_edges: 6,
                    seed: 1,
                },
                delta: 0.1,
                schedule: ScheduleConfig::default(),
                rounds: 5000,
                x0: 1.0,
                mode: Mode::Private,
                bound: 10.0,
                seed: 1,
                adversaries: Vec::new(),
                swap: None,
                burn_in: None,
                outputs: Outputs::default(),
            },
            Preset::Canonical5 => ExperimentConfig {
                game: GameSource::Inline { game: canonical_game() },
                graph: GraphSource::CanonicalFive,
                delta: 0.2,
                schedule: ScheduleConfig::default(),
                rounds: 2000,
                x0: 1.0,
                mode: Mode::Baseline,
                bound: 10.0,
                seed: 1,
                adversaries: vec![4],
                swap: Some([0, 1]),
                burn_in: Some(200),
                outputs: Outputs::default(),
            },
            Preset::K5Cert => ExperimentConfig {
                game: GameSource::Inline { game: canonical_game() },
                graph: GraphSource::Complete { n: 5 },
                delta: 0.2,
                schedule: ScheduleConfig::default(),
                rounds: 50,
                x0: 1.0,
                mode: Mode::Private,
                bound: 10.0,
                seed: 1,
                adversaries: vec![4],
                swap: Some([0, 1]),
                burn_in: None,
                outputs: Outputs::default(),
            },
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset `{s}` (expected paper-fig3, canonical-5 or k5-cert)"))
    }
}

/// Price `6 − 0.5·x̄`, asymmetric costs and boxes `[0, 5]`; the equilibrium
/// is interior.
pub fn canonical_game() -> CournotGame {
    CournotGame::new(
        6.0,
        0.5,
        vec![0.3, 0.1, 0.45, 0.2, 0.25],
        vec![0.7, 0.2, 0.5, 0.9, 0.4],
        vec![StrategyBox::interval(0.0, 5.0).expect("valid box"); 5],
    )
    .expect("valid game")
}
