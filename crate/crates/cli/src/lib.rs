//! `nvmag` runner: reads an experiment config, runs one mode of the
//! simulation/analysis toolkit and writes CSV, SVG and JSON outputs.

pub mod config;
pub mod plot;
pub mod report;
pub mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{ExperimentConfig, Mode};
pub use run::{run, RunOptions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },

    #[error("cannot parse config {path}: {message}")]
    ParseConfig { path: PathBuf, message: String },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),

    #[error("NVMAG_THREADS: {0}")]
    Threads(String),

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] nvmag_core::Error),
}

impl CliError {
    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ReadConfig { .. }
            | CliError::ParseConfig { .. }
            | CliError::Invalid(_)
            | CliError::Threads(_) => 1,
            CliError::Write { .. } | CliError::Core(_) => 2,
        }
    }
}

/// Sizes the global rayon pool from `NVMAG_THREADS` when set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("NVMAG_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Threads(format!("expected a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Threads(e.to_string()))
}
