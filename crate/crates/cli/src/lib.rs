//! Command-line driver: experiment configs, presets and the `run`,
//! `attack`, `certify` and `sweep` commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod presets;

pub use aggnet_core as core;
pub use config::{Experiment, ExperimentConfig, Overrides};
pub use error::CliError;
pub use presets::Preset;
