use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("choice-model Jacobian violates the {0} invariant")]
    JacobianInvariant(&'static str),

    #[error("decision set is empty")]
    EmptyDecisionSet,

    #[error("outcome {outcome} out of range 0..={k}")]
    OutcomeOutOfRange { outcome: usize, k: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
