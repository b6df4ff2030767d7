use thiserror::Error;

/// Errors raised while building or solving a discretized problem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("stabilization assumption violated on element {element}: {reason}")]
    Stabilization { element: usize, reason: String },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("subdomain {subdomain}: {reason}")]
    Subdomain { subdomain: usize, reason: String },

    #[error("preconditioner build failed ({variant}, epsilon = {epsilon:e}): {reason}")]
    Preconditioner {
        variant: String,
        epsilon: f64,
        reason: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
