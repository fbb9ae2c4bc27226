//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by grid construction, solvers, recovery and estimation.
#[derive(Error, Debug)]
pub enum EitError {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A linear solve failed (singular or indefinite system).
    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    /// Measured data is not consistent with any positive network.
    ///
    /// Raised by layer peeling on noisy data; callers typically fall back
    /// to the regularized conductance fit.
    #[error("inconsistent data: {0}")]
    InconsistentData(String),

    /// Conductance or conductivity recovery failed.
    #[error("recovery failed: {0}")]
    RecoveryFailure(String),

    /// A matrix or vector has the wrong dimensions for the operation.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, EitError>;

impl EitError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        EitError::InvalidArgument(msg.into())
    }
}
