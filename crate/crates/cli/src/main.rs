use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aggnet::commands;
use aggnet::core::protocol::Mode;
use aggnet::{CliError, Experiment, ExperimentConfig, Overrides, Preset};
use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "aggnet", version, about = "Distributed aggregative-game experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment (paper-fig3, canonical-5, k5-cert)
    #[arg(long, global = true)]
    preset: Option<Preset>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Overrides the perturbation bound
    #[arg(long, global = true)]
    bound: Option<f64>,
    #[arg(long, global = true)]
    rounds: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Baseline,
    Private,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and write the trace, convergence CSV and summary
    Run,
    /// Attack a trace written by `run` with the same config
    Attack {
        /// Trace to attack; defaults to the configured trace under --out
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Build an indistinguishability certificate for the configured swap
    Certify {
        /// Corrupt one transferred perturbation (negative control)
        #[arg(long)]
        corrupt: bool,
    },
    /// Run a grid of bounds and seeds
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = vec![10.0, 20.0, 30.0, 50.0])]
        deltas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = (1..=10).collect::<Vec<u64>>())]
        seeds: Vec<u64>,
    },
}

fn load(common: &Common) -> Result<Experiment, CliError> {
    let (mut cfg, base) = match (&common.config, common.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(p)) => (p.config(), PathBuf::new()),
        (None, None) => return Err(CliError::config("config", "pass --config <path> or --preset <name>")),
    };
    cfg.apply(&Overrides {
        seed: common.seed,
        mode: common.mode.map(|m| match m {
            ModeArg::Baseline => Mode::Baseline,
            ModeArg::Private => Mode::Private,
        }),
        bound: common.bound,
        rounds: common.rounds,
    });
    Experiment::resolve(cfg, &base)
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let exp = load(&cli.common)?;
    let out: &Path = &cli.common.out;
    eprintln!("config {}", exp.config_hash);
    match &cli.command {
        Command::Run => {
            let summary = commands::run(&exp, out)?;
            print_json(&summary)?;
        }
        Command::Attack { trace } => {
            let report = commands::attack(&exp, out, trace.as_deref())?;
            print_json(&report)?;
        }
        Command::Certify { corrupt } => {
            let report = commands::certify(&exp, out, *corrupt)?;
            print_json(&report)?;
            report.verdict()?;
        }
        Command::Sweep { deltas, seeds } => {
            let workers = commands::workers_from_env()?;
            let report = commands::sweep(&exp, out, deltas, seeds, workers)?;
            print_json(&report.rows)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli).context("aggnet failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
