use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use aggnet_core::adversary::{self, AttackResult};
use aggnet_core::game::nash_oracle_cournot;
use aggnet_core::privacy::{self, Certificate, CertificationSetup, PrivacyError};
use aggnet_core::protocol::{
    self, convergence_rows, gen_obfuscation, run_baseline, run_private, ConvergenceRow, Mode, ProtocolError, Trace,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Experiment;
use crate::error::CliError;

/// Size of the fault injected by `certify --corrupt`.
pub const CORRUPTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub mode: Mode,
    pub bound: f64,
    pub seed: u64,
    pub rounds: usize,
    pub equilibrium: Vec<f64>,
    pub equilibrium_interior: bool,
    pub initial_distance: Option<f64>,
    pub final_distance: Option<f64>,
    pub final_consensus_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub config_hash: String,
    pub mean_error: Option<f64>,
    pub max_error: Option<f64>,
    #[serde(flatten)]
    pub result: AttackResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub config_hash: String,
    pub swap: [usize; 2],
    #[serde(flatten)]
    pub certificate: Certificate,
}

impl CertificateReport {
    /// Maps the certificate to the command's outcome.
    pub fn verdict(&self) -> Result<(), CliError> {
        let c = &self.certificate;
        if !c.structural_ok {
            Err(CliError::Structural(c.reasons.join("; ")))
        } else if !c.passed {
            Err(CliError::Numeric(format!(
                "observable deviation {:.3e}, permutation deviation {:.3e}, worst residual {:.3e} (tolerance {:.1e})",
                c.max_observable_deviation,
                c.max_permutation_deviation,
                c.per_round_max_residual.iter().copied().fold(0.0, f64::max),
                c.tolerance
            )))
        } else {
            Ok(())
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::io(path, e.into()))?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(path, e))
}

fn protocol_failure(path: &Path, e: ProtocolError) -> CliError {
    match e {
        ProtocolError::Io(io) => CliError::io(path, io),
        other => CliError::Numeric(other.to_string()),
    }
}

fn write_csv(path: &Path, rows: &[ConvergenceRow]) -> Result<(), CliError> {
    let out = create(path)?;
    protocol::write_convergence_csv(rows, out).map_err(|e| protocol_failure(path, e))
}

/// Runs the configured protocol with the given obfuscation seed.
pub fn simulate(exp: &Experiment, mode: Mode, bound: f64, seed: u64) -> Result<Trace, CliError> {
    let spec = exp.game.to_spec();
    let cfg = &exp.config;
    let x0 = [cfg.x0];
    let trace = match mode {
        Mode::Baseline => run_baseline(&spec, &exp.graph, &exp.w, exp.schedule, &x0, cfg.rounds),
        Mode::Private => gen_obfuscation(&exp.graph, bound, cfg.rounds, 1, seed)
            .and_then(|obf| run_private(&spec, &exp.graph, &exp.w, exp.schedule, &x0, cfg.rounds, &obf)),
    };
    let mut trace = trace.map_err(|e| CliError::Numeric(e.to_string()))?;
    trace.header.game = Some(exp.game.clone());
    Ok(trace)
}

fn equilibrium(exp: &Experiment) -> Result<aggnet_core::game::NashEquilibrium, CliError> {
    nash_oracle_cournot(&exp.game).map_err(|e| CliError::Numeric(format!("equilibrium oracle: {e}")))
}

/// `run`: trace, convergence CSV and a summary, all under `out`.
pub fn run(exp: &Experiment, out: &Path) -> Result<RunSummary, CliError> {
    let cfg = &exp.config;
    let ne = equilibrium(exp)?;
    let mut trace = simulate(exp, cfg.mode, exp.effective_bound(), cfg.seed)?;
    trace.header.config_hash = Some(exp.config_hash.clone());
    let rows = convergence_rows(&trace, &ne.profile).map_err(|e| CliError::Numeric(e.to_string()))?;

    let trace_path = out.join(&cfg.outputs.trace);
    let w = create(&trace_path)?;
    protocol::write_jsonl(&trace, w).map_err(|e| protocol_failure(&trace_path, e))?;
    write_csv(&out.join(&cfg.outputs.convergence), &rows)?;

    let summary = RunSummary {
        config_hash: exp.config_hash.clone(),
        mode: cfg.mode,
        bound: exp.effective_bound(),
        seed: cfg.seed,
        rounds: cfg.rounds,
        equilibrium: ne.profile,
        equilibrium_interior: ne.interior,
        initial_distance: rows.first().map(|r| r.mean_distance),
        final_distance: rows.last().map(|r| r.mean_distance),
        final_consensus_error: rows.last().map(|r| r.max_consensus_error),
    };
    write_json(&out.join(&cfg.outputs.summary), &summary)?;
    Ok(summary)
}

pub fn read_trace(path: &Path) -> Result<Trace, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    protocol::read_jsonl(BufReader::new(file)).map_err(|e| match e {
        ProtocolError::Io(io) => CliError::io(path, io),
        other => CliError::config("trace", other),
    })
}

/// `attack`: reads the trace written by `run` for the same config.
pub fn attack(exp: &Experiment, out: &Path, trace_path: Option<&Path>) -> Result<AttackReport, CliError> {
    let cfg = &exp.config;
    if exp.adversaries.is_empty() {
        return Err(CliError::config(
            "adversaries",
            "an attack needs at least one adversary",
        ));
    }
    let path: PathBuf = trace_path.map_or_else(|| out.join(&cfg.outputs.trace), Path::to_path_buf);
    let trace = read_trace(&path)?;
    match &trace.header.config_hash {
        Some(h) if *h == exp.config_hash => {}
        other => {
            return Err(CliError::config(
                "trace",
                format!(
                    "{} was produced by config {} but the current config hashes to {}",
                    path.display(),
                    other.as_deref().unwrap_or("<none>"),
                    exp.config_hash
                ),
            ))
        }
    }
    let report = attack_trace(exp, &trace)?;
    write_json(&out.join(&cfg.outputs.attack), &report)?;
    Ok(report)
}

fn attack_trace(exp: &Experiment, trace: &Trace) -> Result<AttackReport, CliError> {
    let result = adversary::attack(trace, &exp.adversaries, exp.burn_in()).map_err(|e| match e {
        adversary::AdversaryError::AllNodes
        | adversary::AdversaryError::Empty
        | adversary::AdversaryError::NodeOutOfRange { .. } => CliError::config("adversaries", e),
        other => CliError::Numeric(other.to_string()),
    })?;
    Ok(AttackReport {
        config_hash: exp.config_hash.clone(),
        mean_error: result.mean_error(),
        max_error: result.max_error(),
        result,
    })
}

/// `certify`: the certificate is written even when it fails; use
/// [`CertificateReport::verdict`] for the exit status.
pub fn certify(exp: &Experiment, out: &Path, corrupt: bool) -> Result<CertificateReport, CliError> {
    let cfg = &exp.config;
    if exp.adversaries.is_empty() {
        return Err(CliError::config(
            "adversaries",
            "certification needs at least one adversary",
        ));
    }
    let swap = match cfg.swap {
        Some(s) => s,
        None => {
            let mut honest = (0..exp.graph.node_count()).filter(|i| !exp.adversaries.contains(i));
            match (honest.next(), honest.next()) {
                (Some(i), Some(j)) => [i, j],
                _ => return Err(CliError::config("swap", "fewer than two honest players")),
            }
        }
    };
    let setup = CertificationSetup {
        spec: exp.game.to_spec(),
        graph: exp.graph.clone(),
        w: exp.w.clone(),
        schedule: exp.schedule,
        x0: vec![cfg.x0],
        adversaries: exp.adversaries.clone(),
        rounds: cfg.rounds,
        bound: cfg.bound,
        seed: cfg.seed,
        tolerance: privacy::DEFAULT_TOLERANCE,
        rank_tol: aggnet_core::numerics::DEFAULT_RANK_TOL,
        corruption: corrupt.then_some(CORRUPTION),
    };
    let certificate = privacy::certify(&setup, swap[0], swap[1]).map_err(|e| match e {
        PrivacyError::InvalidSwap { .. } | PrivacyError::MovesAdversary(_) => CliError::config("swap", e),
        other => CliError::Numeric(other.to_string()),
    })?;
    let report = CertificateReport {
        config_hash: exp.config_hash.clone(),
        swap,
        certificate,
    };
    write_json(&out.join(&cfg.outputs.certificate), &report)?;
    Ok(report)
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub label: String,
    pub mode: Mode,
    pub bound: f64,
    pub seed: u64,
    pub initial_distance: Option<f64>,
    pub final_distance: Option<f64>,
    /// Largest distance over the last tenth of the horizon.
    pub tail_max_distance: Option<f64>,
    /// Tail stays below a tenth of the initial distance.
    pub converged: Option<bool>,
    pub attack_mean_error: Option<f64>,
    pub attack_max_error: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub mode: Mode,
    pub bound: f64,
    pub cells: usize,
    pub failed: usize,
    pub mean_final_distance: Option<f64>,
    pub mean_attack_error: Option<f64>,
    pub all_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config_hash: String,
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn row(&self, label: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

fn delta_label(bound: f64) -> String {
    format!("delta={bound}")
}

/// Worker count from `AGGNET_WORKERS`, if set.
pub fn workers_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("AGGNET_WORKERS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::config(
                "AGGNET_WORKERS",
                format!("`{s}` is not a positive integer"),
            )),
        },
    }
}

/// `sweep`: a baseline cell and one private cell per Δ (Δ=0 always
/// included) for every seed. Seeds drive the perturbations only; the game
/// and graph stay fixed by the config.
pub fn sweep(
    exp: &Experiment,
    out: &Path,
    deltas: &[f64],
    seeds: &[u64],
    workers: Option<usize>,
) -> Result<SweepReport, CliError> {
    if deltas.is_empty() {
        return Err(CliError::config("deltas", "empty list"));
    }
    if seeds.is_empty() {
        return Err(CliError::config("seeds", "empty list"));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
        return Err(CliError::config(
            "deltas",
            format!("{d} is not a finite nonnegative bound"),
        ));
    }
    let mut grid: Vec<(Mode, f64)> = vec![(Mode::Baseline, 0.0)];
    if !deltas.contains(&0.0) {
        grid.push((Mode::Private, 0.0));
    }
    for d in deltas {
        if !grid.contains(&(Mode::Private, *d)) {
            grid.push((Mode::Private, *d));
        }
    }
    let ne = equilibrium(exp)?;
    let cells_dir = out.join(&exp.config.outputs.sweep_cells);
    let jobs: Vec<(Mode, f64, u64)> = grid
        .iter()
        .flat_map(|&(m, d)| seeds.iter().map(move |&s| (m, d, s)))
        .collect();
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = workers {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| CliError::Numeric(format!("worker pool: {e}")))?
    };
    let cells: Vec<SweepCell> = pool.install(|| {
        jobs.par_iter()
            .map(|&(mode, bound, seed)| sweep_cell(exp, &ne.profile, &cells_dir, mode, bound, seed))
            .collect()
    });
    for c in cells.iter().filter(|c| c.error.is_some()) {
        eprintln!(
            "sweep cell {} seed {} failed: {}",
            c.label,
            c.seed,
            c.error.as_deref().unwrap_or("")
        );
    }

    let rows = grid
        .iter()
        .map(|&(mode, bound)| {
            let mine: Vec<&SweepCell> = cells.iter().filter(|c| c.mode == mode && c.bound == bound).collect();
            let ok: Vec<&&SweepCell> = mine.iter().filter(|c| c.error.is_none()).collect();
            let mean = |f: fn(&SweepCell) -> Option<f64>| {
                let vals: Option<Vec<f64>> = ok.iter().map(|c| f(c)).collect();
                vals.filter(|v| !v.is_empty())
                    .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            };
            SweepRow {
                label: mine[0].label.clone(),
                mode,
                bound,
                cells: mine.len(),
                failed: mine.len() - ok.len(),
                mean_final_distance: mean(|c| c.final_distance),
                mean_attack_error: mean(|c| c.attack_mean_error),
                all_converged: !ok.is_empty() && ok.iter().all(|c| c.converged == Some(true)),
            }
        })
        .collect();

    let report = SweepReport {
        config_hash: exp.config_hash.clone(),
        deltas: deltas.to_vec(),
        seeds: seeds.to_vec(),
        rows,
        cells,
    };
    let csv_path = out.join(&exp.config.outputs.sweep);
    let mut w = csv::Writer::from_writer(create(&csv_path)?);
    for c in &report.cells {
        w.serialize(c)
            .map_err(|e| CliError::io(&csv_path, std::io::Error::other(e)))?;
    }
    w.flush().map_err(|e| CliError::io(&csv_path, e))?;
    write_json(&out.join(&exp.config.outputs.sweep_summary), &report)?;
    Ok(report)
}

fn sweep_cell(exp: &Experiment, xstar: &[f64], dir: &Path, mode: Mode, bound: f64, seed: u64) -> SweepCell {
    let label = match mode {
        Mode::Baseline => "baseline".to_string(),
        Mode::Private => delta_label(bound),
    };
    let mut cell = SweepCell {
        label,
        mode,
        bound,
        seed,
        initial_distance: None,
        final_distance: None,
        tail_max_distance: None,
        converged: None,
        attack_mean_error: None,
        attack_max_error: None,
        error: None,
    };
    if let Err(e) = fill_cell(exp, xstar, dir, &mut cell) {
        let mut msg = e.to_string();
        let mut src = std::error::Error::source(&e);
        while let Some(s) = src {
            msg = format!("{msg}: {s}");
            src = s.source();
        }
        cell.error = Some(msg);
    }
    cell
}

fn fill_cell(exp: &Experiment, xstar: &[f64], dir: &Path, cell: &mut SweepCell) -> Result<(), CliError> {
    let trace = simulate(exp, cell.mode, cell.bound, cell.seed)?;
    let rows = convergence_rows(&trace, xstar).map_err(|e| CliError::Numeric(e.to_string()))?;
    write_csv(
        &dir.join(format!("{}_seed{}.csv", cell.label.replace('=', ""), cell.seed)),
        &rows,
    )?;
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        let tail_start = rows.len() - rows.len().div_ceil(10);
        let tail = rows[tail_start..].iter().map(|r| r.mean_distance).fold(0.0, f64::max);
        cell.initial_distance = Some(first.mean_distance);
        cell.final_distance = Some(last.mean_distance);
        cell.tail_max_distance = Some(tail);
        cell.converged = Some(tail < 0.1 * first.mean_distance);
    }
    if !exp.adversaries.is_empty() && !trace.rounds.is_empty() {
        let report = attack_trace(exp, &trace)?;
        cell.attack_mean_error = report.mean_error;
        cell.attack_max_error = report.max_error;
    }
    Ok(())
}
