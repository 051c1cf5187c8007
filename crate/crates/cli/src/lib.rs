//! Command-line front end for sovm: single runs, the scenario matrix,
//! calibration and reports.

pub mod artifacts;
pub mod cli;
pub mod matrix;
pub mod summary;
pub mod svg;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: flags, configuration or data files. Exit code 1.
    #[error("{0}")]
    Invalid(String),
    /// Something failed while running. Exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

pub(crate) fn io_err(what: &str, path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{what} {}: {e}", path.display()))
}
