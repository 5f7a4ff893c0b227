use thiserror::Error;

/// Errors raised by the design, fitting and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A logarithm was requested of a sample that is not strictly positive.
    #[error("nonpositive sample {value} at grid index {index}")]
    NonPositiveSample { index: usize, value: f64 },

    /// The noise-shaping filter violates the quantizer-input variance budget.
    #[error("infeasible design: ||R||^2 = {norm_sq} is not below nu = {nu}")]
    Infeasible { norm_sq: f64, nu: f64 },

    /// A structural parameter (order, length, grid size) is invalid.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An iterative or factorization step failed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A filter has a pole on or outside the unit circle.
    #[error("unstable filter: largest pole magnitude {radius}")]
    Unstable { radius: f64 },

    /// A filter whose impulse response starts with zero cannot be head-normalized.
    #[error("degenerate filter: {0}")]
    DegenerateFilter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
