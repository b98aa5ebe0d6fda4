use thiserror::Error;

/// Errors produced by the estimator library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite position at step {step} (step size {step_size}); the step is likely too large for this model")]
    NonFinite { step: u64, step_size: f64 },

    #[error("empty averaging window: no grid index in [{tau}, {horizon}) at step {step_size}")]
    EmptyWindow {
        tau: f64,
        horizon: f64,
        step_size: f64,
    },

    #[error("infeasible plan: {0}")]
    Infeasible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
