//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("type mismatch: {0}")]
    TypeMismatch(String),

    #[error("empty group: {0}")]
    EmptyGroup(String),

    #[error("zero mixture density at {0}")]
    DegenerateDensity(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("grid too large: {points} points exceeds limit {limit}")]
    GridTooLarge { points: u128, limit: usize },

    #[error("enumeration too large: {count} sequences exceeds limit {limit}")]
    EnumerationTooLarge { count: u128, limit: usize },

    #[error("unknown name: {0}")]
    UnknownName(String),
}

pub type Result<T> = std::result::Result<T, Error>;
