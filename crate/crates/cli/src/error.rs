use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Model(#[from] nadir_core::Error),

    /// The run finished but its outcome is a failure (infeasible or failed checks).
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(..) | CliError::Csv(_) => 1,
            CliError::Model(nadir_core::Error::Domain { .. }) => 1,
            CliError::Model(_) => 3,
            CliError::Failed(_) => 2,
        }
    }
}
