//! Experiment harness for `ssqp-core`: JSON configs, CSV traces, metadata,
//! threshold and slope analysis and the `sfo + M * qmo` cost model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod experiment;
pub mod report;
pub mod trace_io;

use std::path::Path;

pub use config::BenchConfig;
pub use experiment::{run_experiment, ExperimentOutput};

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "SSQP_OUTPUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("reference solve failed: {0}")]
    Reference(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("trace error: {0}")]
    Trace(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(ssqp_core::Error),
}

impl BenchError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io { path: path.display().to_string(), source }
    }

    /// Process exit code: 2 for configuration problems, 4 for reference
    /// failures, 1 otherwise. Divergence is not an error (exit code 3 is set
    /// by the caller from the run statuses).
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::Data(_) => 2,
            BenchError::Reference(_) => 4,
            _ => 1,
        }
    }
}

impl From<ssqp_core::Error> for BenchError {
    fn from(e: ssqp_core::Error) -> Self {
        use ssqp_core::Error as E;
        match e {
            E::InvalidParameter(_) | E::DimensionMismatch { .. } | E::Infeasible { .. } | E::SizeLimit { .. } => {
                BenchError::Config(e.to_string())
            }
            other => BenchError::Core(other),
        }
    }
}

pub const EXIT_DIVERGED: i32 = 3;
