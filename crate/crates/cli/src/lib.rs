//! Scenario runner for the virtual guide simulator: parses TOML scenarios and
//! writes episode, sweep and tube-geometry CSV files.

use std::path::PathBuf;

pub mod commands;
pub mod scenario;
pub mod selftest;

pub use commands::{cmd_run, cmd_shapes, cmd_sweep, RunOptions, SweepOptions};
pub use scenario::{parse_scenario, ScenarioFile};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },

    #[error("`{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Core(#[from] vguide::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 for problems with the invocation or the scenario, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Syntax { .. } | CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::Core(vguide::Error::Range { .. } | vguide::Error::InvalidInput(_) | vguide::Error::InvalidShape(_)) => 2,
            CliError::Core(_) | CliError::Io { .. } => 1,
        }
    }
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Completed, but a `--strict` check failed.
    Failed,
}
