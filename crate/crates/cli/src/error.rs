use std::path::PathBuf;

use msd_core::MsdError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("numeric failure: {0}")]
    Numeric(#[from] MsdError),

    #[error("{0}")]
    MissingSeries(String),

    #[error("empty record set")]
    EmptyRecords,

    #[error("acceptance check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit status: 1 usage/config, 2 acceptance failure, 3 numeric.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_)
            | CliError::Config(_)
            | CliError::Io { .. }
            | CliError::Json(_)
            | CliError::MissingSeries(_)
            | CliError::EmptyRecords => 1,
            CliError::CheckFailed(_) => 2,
            CliError::Numeric(_) | CliError::Csv(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
