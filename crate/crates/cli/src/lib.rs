//! Experiment runner for `hvprox-core`: config files, multi-seed sweeps,
//! CSV traces and the validation suite behind the `hvprox` binary.

pub mod config;
pub mod experiment;
pub mod validate;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use config::{parse_config, ConfigError, ExperimentConfig};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const CONFIG: u8 = 1;
    pub const DIVERGED: u8 = 2;
    pub const VALIDATION: u8 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Core(#[from] hvprox_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(hvprox_core::Error::Diverged { .. }) => exit::DIVERGED,
            _ => exit::CONFIG,
        }
    }
}
