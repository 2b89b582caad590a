//! Experiment driver behind the `irl-dr` binary: configuration, the four
//! workflows, run manifests and chart output.

pub mod config;
pub mod manifest;
pub mod svg;
pub mod workflows;

use std::path::Path;

use thiserror::Error;

pub use config::ExperimentConfig;
pub use workflows::{run, Command};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, missing input or missing prerequisite artifacts.
    #[error("{0}")]
    User(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 2,
            CliError::Internal(_) => 1,
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Internal(format!("{}: {e}", path.display()))
    }
}

impl From<irl_dr_core::Error> for CliError {
    fn from(e: irl_dr_core::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}
