use thiserror::Error;

/// Errors raised by the numerical pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("cutoff cannot be resolved: {0}")]
    UnresolvedCutoff(String),

    #[error("empty mask")]
    EmptyMask,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("linear solve failed: {0}")]
    SingularSystem(String),

    #[error("eigensolver did not converge: {0}")]
    EigenFailure(String),

    #[error("support of the field touches the box boundary")]
    SupportTouchesBoundary,

    #[error("calibration residual too large: {0:.3e}")]
    CalibrationFailure(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("dimension {dim} exceeds the budget {budget}")]
    OverBudget { dim: usize, budget: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
