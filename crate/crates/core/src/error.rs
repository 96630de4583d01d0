use std::fmt;

/// Errors raised by model construction, bound evaluation and estimation.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its admissible range.
    InvalidParameter(String),
    /// AR polynomial or transition matrix is not strictly stable.
    Unstable(String),
    /// Covariance is not symmetric positive definite.
    NotPositiveDefinite(String),
    /// A quantity has no analytic form for this model (caller falls back to estimation).
    NotAnalytic(String),
    /// Requested index exceeds a configured computation horizon.
    Capacity { requested: usize, limit: usize },
    /// Numerical integration failed (log divergence, budget exhausted).
    Quadrature(String),
    /// Signal dimensions of model and controller disagree.
    DimensionMismatch { expected: usize, found: usize },
    /// Not enough samples for the requested estimator.
    InsufficientData { needed: usize, found: usize },
    /// Model family not supported by the requested operation.
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::Unstable(msg) => write!(f, "unstable model: {msg}"),
            Error::NotPositiveDefinite(msg) => write!(f, "not positive definite: {msg}"),
            Error::NotAnalytic(msg) => write!(f, "no analytic value: {msg}"),
            Error::Capacity { requested, limit } => {
                write!(f, "index {requested} exceeds configured horizon {limit}")
            }
            Error::Quadrature(msg) => write!(f, "quadrature failure: {msg}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::InsufficientData { needed, found } => {
                write!(f, "need at least {needed} samples, got {found}")
            }
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
        }
    }
}

impl std::error::Error for Error {}
