use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance factorization failed; try a larger jitter (current {jitter:e})")]
    FactorizationFailed { jitter: f64 },

    #[error("zero data vector: cannot start bidiagonalization")]
    ZeroData,

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
