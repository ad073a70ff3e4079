use thiserror::Error;

/// Errors surfaced by the estimation and tuning routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("degenerate residuals: {0}")]
    DegenerateResiduals(String),
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),
    #[error("invalid cross-validation plan: {0}")]
    InvalidPlan(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
