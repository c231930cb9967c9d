use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced to the command line, each with its exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("structural certification failure: {0}")]
    Structural(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl ToString) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Structural(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io { .. } => 5,
        }
    }
}
