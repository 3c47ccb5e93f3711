use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("rank deficient input: {0}")]
    RankDeficient(String),
    #[error("problem too large: {0}")]
    TooLarge(String),
    #[error("vector is not unit norm (norm {0})")]
    NotUnitNorm(f64),
    #[error("zero vector")]
    ZeroVector,
    #[error("point outside representable range: {0}")]
    OutOfRange(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

