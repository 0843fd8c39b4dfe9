//! Batch front end: config parsing, command dispatch and report files.
//!
//! Each command writes `<command>.<ext>` into the output directory, plus
//! optional CSV side files. JSON reports carry the parsed config, the seed
//! and the generator id, and contain no timestamps, so identical inputs give
//! byte-identical files.

mod config;
mod run;

use std::path::PathBuf;
use thiserror::Error;

pub use config::{
    load_config, parse_config, BatterySel, BoundSel, CapacityParams, ConfigEcho, ConvergeParams, DualityParams, Format,
    HedgeParams, PriceParams, QvRunParams, RunConfig,
};
pub use run::{execute, run, Command, Report, RunOptions, RunSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NEGATIVE_GAP: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Environment variable consulted for the output directory when neither
/// `--out` nor `output.dir` is given.
pub const OUT_DIR_ENV: &str = "QVBAND_OUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {message}")]
    Config { key: String, message: String },

    #[error("{key}: {source}")]
    Engine {
        key: String,
        #[source]
        source: crate::Error,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub(crate) fn engine(key: &str, source: crate::Error) -> Self {
        CliError::Engine {
            key: key.to_string(),
            source,
        }
    }

    /// The config key the error refers to, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            CliError::Config { key, .. } | CliError::Engine { key, .. } => Some(key),
            CliError::Io { .. } => None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => EXIT_VALIDATION,
            CliError::Engine {
                source: crate::Error::NegativeGap { .. },
                ..
            } => EXIT_NEGATIVE_GAP,
            CliError::Engine { .. } => EXIT_VALIDATION,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}
