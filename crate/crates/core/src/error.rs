use thiserror::Error;

/// Errors raised by the solvers and their building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported order q={0} (expected 4, 6 or 8)")]
    UnsupportedOrder(usize),

    #[error("singular Jacobian (pivot {pivot:e} in column {column})")]
    SingularJacobian { column: usize, pivot: f64 },

    #[error("fixed-point iteration did not converge after {sweeps} sweeps (last change {change:e}) at step {step}")]
    NoConvergence { step: usize, sweeps: usize, change: f64 },

    #[error("kmax ceiling {ceiling} exceeded")]
    CapExceeded { ceiling: usize },

    #[error("pipeline stalled: worker {worker} waited too long for a message")]
    Deadlock { worker: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
