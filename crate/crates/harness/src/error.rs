use std::path::PathBuf;

use thiserror::Error;

use pvdt_core::{ConfigError as CoreConfigError, FitError, MetricsError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Malformed or invalid row; `line` is 1-based and counts the header.
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<CoreConfigError> for HarnessError {
    fn from(e: CoreConfigError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
