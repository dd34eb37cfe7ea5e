use std::path::PathBuf;

use thiserror::Error;

/// Failure classes of the runner, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(#[from] glocal_core::Error),
    #[error("invariant check failed: {0}")]
    Validation(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) | CliError::Validation(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}
