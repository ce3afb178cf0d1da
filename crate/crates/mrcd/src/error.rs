//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by estimation, preprocessing and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("need at least {required} observations, got {actual}")]
    TooFewObservations { required: usize, actual: usize },

    #[error("input length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("degenerate variable {name:?} (column {index}): zero robust scale")]
    DegenerateColumn { index: usize, name: String },

    #[error("subset size h = {h} out of range [{min}, {max}]")]
    BadSubsetSize { h: usize, min: usize, max: usize },

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("matrix is not positive definite (eigenvalue {eigenvalue})")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("condition number {condition} exceeds the allowed maximum {max}")]
    IllConditioned { condition: f64, max: f64 },

    #[error("singular scatter matrix, regularization required")]
    SingularScatter,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty h range")]
    EmptyRange,

    #[error("invalid simulation config: {0}")]
    ConfigSchema(String),

    #[error("correlation generator failed to reach the condition band: {0}")]
    GeneratorDiverged(String),

    #[error("csv parse error: {0}")]
    Csv(String),

    #[error("non-numeric cell at row {row}, column {column:?}")]
    NonNumericCell { row: usize, column: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
