use thiserror::Error;

/// Errors raised by the streaming estimators, the batch oracles and the harness.
#[derive(Debug, Error)]
pub enum OssirError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("empty state: {0}")]
    EmptyState(String),

    /// A matrix that must be non-zero / invertible is not.
    #[error("degenerate matrix: {0}")]
    Degenerate(String),

    #[error("no convergence after {iterations} iterations (duality gap {gap:.3e}, tolerance {tol:.3e})")]
    NonConvergence { iterations: usize, gap: f64, tol: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl OssirError {
    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            OssirError::InvalidConfig(_) => "invalid_config",
            OssirError::InvalidData(_) => "invalid_data",
            OssirError::EmptyState(_) => "empty_state",
            OssirError::Degenerate(_) => "degenerate",
            OssirError::NonConvergence { .. } => "non_convergence",
            OssirError::Parse { .. } => "parse",
            OssirError::Io(_) => "io",
            OssirError::Csv(_) => "csv",
            OssirError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, OssirError>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(OssirError::InvalidConfig(msg.into()))
}

pub(crate) fn data<T>(msg: impl Into<String>) -> Result<T> {
    Err(OssirError::InvalidData(msg.into()))
}
