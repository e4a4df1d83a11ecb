//! Command-line harness: dataset validation, agent evaluation runs, and the
//! diversity, trend, consensus and summary reports built on their outputs.
//!
//! Every command writes through temp-file-then-rename, iterates in a fixed
//! order and records no timestamps, so equal inputs give equal bytes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod consensus;
pub mod dataset;
pub mod eval;
pub mod output;
pub mod report;
pub mod tables;

use thiserror::Error;

pub use config::{BackendSpec, CoverageLevel, PanoSpec, RunConfig};
pub use consensus::cmd_consensus;
pub use dataset::{load_dataset, validate_dataset, Dataset, ValidationSummary};
pub use eval::{cmd_eval, BenchReport, EpisodeRecord, EvalOutput, LevelReport};
pub use report::cmd_report;
pub use tables::{cmd_diversity, cmd_trend, DiversityRow, TrendRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: configuration, dataset or CSV content.
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

/// Runs `validate` and maps a failed check to a validation error.
pub fn cmd_validate(dataset_dir: &std::path::Path, min_depth: usize) -> Result<ValidationSummary, CliError> {
    let summary = validate_dataset(dataset_dir, min_depth)?;
    if summary.passed() {
        Ok(summary)
    } else {
        Err(CliError::Validation(summary.render()))
    }
}
