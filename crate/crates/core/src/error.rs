use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("dimension {dim} exceeds the memory budget of {budget}; lower n_max")]
    Budget { dim: usize, budget: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("invalid sparse entry at ({row}, {col}): {reason}")]
    SparseEntry { row: usize, col: usize, reason: &'static str },

    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("integration unstable: {0}")]
    Unstable(String),

    #[error("outside the domain of validity: {0}")]
    Domain(String),

    #[error("trajectory {index} (seed {seed}) aborted: {reason}")]
    TrajectoryAborted { seed: u64, index: u64, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam { field, reason: reason.into() }
}
