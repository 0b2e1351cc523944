//! Experiment orchestration for the dumbbell laboratory: a validated TOML configuration, the
//! task pipeline that evaluates the acceptance checks, and the summary and CSV writers.

pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{ExperimentConfig, Tier};
pub use pipeline::{run, Check, Fitted, Report, Task};

use thiserror::Error;

/// Failures that stop a run.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("assumption failed: {0}")]
    Assumption(String),
    #[error("{claim}: {source}")]
    Module {
        claim: String,
        #[source]
        source: dumbbell_core::Error,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit code: 2 for configuration and assumption failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Assumption(_) => 2,
            _ => 1,
        }
    }
}
