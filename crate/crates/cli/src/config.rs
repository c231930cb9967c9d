use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use aggnet_core::game::{CournotGame, StrategyBox};
use aggnet_core::graph::{Graph, MixingMatrix};
use aggnet_core::protocol::{Mode, StepSchedule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Experiment description as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameSource,
    pub graph: GraphSource,
    pub delta: f64,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    pub rounds: usize,
    #[serde(default = "default_x0")]
    pub x0: f64,
    pub mode: Mode,
    /// Perturbation bound Δ; ignored in baseline mode.
    #[serde(default)]
    pub bound: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub adversaries: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swap: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub outputs: Outputs,
}

fn default_x0() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    #[serde(default = "default_p")]
    pub p: f64,
}

fn default_alpha0() -> f64 {
    1.0
}

fn default_p() -> f64 {
    0.51
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            alpha0: default_alpha0(),
            p: default_p(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GameSource {
    Inline {
        game: CournotGame,
    },
    /// JSON file holding a Cournot game, relative to the config file.
    File {
        path: PathBuf,
    },
    /// Coefficients drawn uniformly; `n` defaults to the graph size and
    /// `seed` to the master seed.
    Sampled {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
        a: f64,
        b: f64,
        zeta2: [f64; 2],
        zeta1: [f64; 2],
        #[serde(rename = "box")]
        strategy_box: [f64; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    Inline {
        n: usize,
        edges: Vec<[usize; 2]>,
    },
    /// Edge-list text, or the JSON form when the extension is `.json`.
    File {
        path: PathBuf,
    },
    RandomConnectedNonbipartite {
        n: usize,
        extra_edges: usize,
        seed: u64,
    },
    Complete {
        n: usize,
    },
    Cycle {
        n: usize,
    },
    Path {
        n: usize,
    },
    Star {
        n: usize,
    },
    CanonicalFive,
}

/// Output file names, resolved against the `--out` directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub trace: PathBuf,
    pub convergence: PathBuf,
    pub summary: PathBuf,
    pub attack: PathBuf,
    pub certificate: PathBuf,
    pub sweep: PathBuf,
    pub sweep_summary: PathBuf,
    pub sweep_cells: PathBuf,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs {
            trace: "trace.jsonl".into(),
            convergence: "convergence.csv".into(),
            summary: "summary.json".into(),
            attack: "attack.json".into(),
            certificate: "certificate.json".into(),
            sweep: "sweep.csv".into(),
            sweep_summary: "sweep_summary.json".into(),
            sweep_cells: "cells".into(),
        }
    }
}

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub bound: Option<f64>,
    pub rounds: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "config".to_string() } else { path };
            CliError::config(field, e.into_inner())
        })
    }

    /// Reads a config file; relative paths inside it resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg = Self::from_json(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(m) = o.mode {
            self.mode = m;
        }
        if let Some(b) = o.bound {
            self.bound = b;
        }
        if let Some(r) = o.rounds {
            self.rounds = r;
        }
    }
}

/// A validated config with every referenced object built.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub game: CournotGame,
    pub graph: Graph,
    pub w: MixingMatrix,
    pub schedule: StepSchedule,
    pub adversaries: BTreeSet<usize>,
    pub config_hash: String,
}

/// The run-determining part of a config, hashed to tie outputs together.
#[derive(Serialize)]
struct HashInput<'a> {
    game: &'a CournotGame,
    graph: &'a Graph,
    delta: f64,
    schedule: ScheduleConfig,
    rounds: usize,
    x0: f64,
    mode: Mode,
    bound: f64,
    seed: u64,
}

impl Experiment {
    pub fn resolve(config: ExperimentConfig, base: &Path) -> Result<Self, CliError> {
        let graph = build_graph(&config.graph, base)?;
        let n = graph.node_count();
        let game = build_game(&config.game, n, config.seed, base)?;
        if game.players() != n {
            return Err(CliError::config(
                "game",
                format!("{} players on a graph with {n} nodes", game.players()),
            ));
        }
        let w = MixingMatrix::new(&graph, config.delta).map_err(|e| CliError::config("delta", e))?;
        let schedule = StepSchedule::new(config.schedule.alpha0, config.schedule.p)
            .map_err(|e| CliError::config("schedule", e))?;
        if !game.to_spec().common_point_feasible(&[config.x0]) {
            return Err(CliError::config(
                "x0",
                format!("{} lies outside some strategy box", config.x0),
            ));
        }
        if !(config.bound >= 0.0 && config.bound.is_finite()) {
            return Err(CliError::config(
                "bound",
                format!("{} is not a finite nonnegative number", config.bound),
            ));
        }
        let adversaries: BTreeSet<usize> = config.adversaries.iter().copied().collect();
        if let Some(a) = adversaries.iter().find(|a| **a >= n) {
            return Err(CliError::config(
                "adversaries",
                format!("node {a} is out of range for {n} nodes"),
            ));
        }
        if !adversaries.is_empty() && adversaries.len() == n {
            return Err(CliError::config("adversaries", "every node is adversarial"));
        }
        if let Some([i, j]) = config.swap {
            if i >= n || j >= n || i == j {
                return Err(CliError::config(
                    "swap",
                    format!("({i}, {j}) is not a pair of distinct nodes"),
                ));
            }
            if adversaries.contains(&i) || adversaries.contains(&j) {
                return Err(CliError::config("swap", "swapped players must be honest"));
            }
        }
        if let Some(b) = config.burn_in {
            if config.rounds > 0 && b >= config.rounds {
                return Err(CliError::config(
                    "burn_in",
                    format!("{b} leaves no rounds of a {}-round horizon", config.rounds),
                ));
            }
        }
        let bound = match config.mode {
            Mode::Baseline => 0.0,
            Mode::Private => config.bound,
        };
        let input = HashInput {
            game: &game,
            graph: &graph,
            delta: config.delta,
            schedule: config.schedule,
            rounds: config.rounds,
            x0: config.x0,
            mode: config.mode,
            bound,
            seed: config.seed,
        };
        let canonical = serde_json::to_vec(&input).expect("config serializes");
        let config_hash = hex::encode(Sha256::digest(&canonical));
        Ok(Experiment {
            config,
            game,
            graph,
            w,
            schedule,
            adversaries,
            config_hash,
        })
    }

    /// Δ actually applied: zero in baseline mode.
    pub fn effective_bound(&self) -> f64 {
        match self.config.mode {
            Mode::Baseline => 0.0,
            Mode::Private => self.config.bound,
        }
    }

    pub fn burn_in(&self) -> usize {
        self.config
            .burn_in
            .unwrap_or_else(|| aggnet_core::adversary::default_burn_in(self.config.rounds))
    }
}

fn build_graph(src: &GraphSource, base: &Path) -> Result<Graph, CliError> {
    let bad = |e: aggnet_core::graph::GraphError| CliError::config("graph", e);
    match src {
        GraphSource::Inline { n, edges } => Graph::new(*n, edges.iter().map(|e| (e[0], e[1]))).map_err(bad),
        GraphSource::File { path } => {
            let full = base.join(path);
            let text = fs::read_to_string(&full).map_err(|e| CliError::io(&full, e))?;
            if full.extension().is_some_and(|x| x == "json") {
                serde_json::from_str(&text).map_err(|e| CliError::config("graph.path", e))
            } else {
                text.parse().map_err(bad)
            }
        }
        GraphSource::RandomConnectedNonbipartite { n, extra_edges, seed } => {
            Graph::random_connected_nonbipartite(*n, *extra_edges, *seed).map_err(bad)
        }
        GraphSource::Complete { n } => Graph::complete(*n).map_err(bad),
        GraphSource::Cycle { n } => Graph::cycle(*n).map_err(bad),
        GraphSource::Path { n } => Graph::path(*n).map_err(bad),
        GraphSource::Star { n } => Graph::star(*n).map_err(bad),
        GraphSource::CanonicalFive => Ok(Graph::canonical_five()),
    }
}

fn build_game(src: &GameSource, nodes: usize, master_seed: u64, base: &Path) -> Result<CournotGame, CliError> {
    match src {
        GameSource::Inline { game } => Ok(game.clone()),
        GameSource::File { path } => {
            let full = base.join(path);
            let text = fs::read_to_string(&full).map_err(|e| CliError::io(&full, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::config("game.path", e))
        }
        GameSource::Sampled {
            n,
            a,
            b,
            zeta2,
            zeta1,
            strategy_box,
            seed,
        } => {
            let range = |field: &str, r: [f64; 2]| {
                if r[0] <= r[1] && r[0].is_finite() && r[1].is_finite() {
                    Ok((r[0], r[1]))
                } else {
                    Err(CliError::config(field, format!("[{}, {}] is not a range", r[0], r[1])))
                }
            };
            let z2 = range("game.zeta2", *zeta2)?;
            let z1 = range("game.zeta1", *zeta1)?;
            let bx =
                StrategyBox::interval(strategy_box[0], strategy_box[1]).map_err(|e| CliError::config("game.box", e))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(master_seed));
            CournotGame::sample(n.unwrap_or(nodes), *a, *b, z2, z1, bx, &mut rng)
                .map_err(|e| CliError::config("game", e))
        }
    }
}
