use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("triplet {index} ({row}, {col}, {count}) is out of range for a {n_rows}x{n_cols} matrix")]
    TripletOutOfRange { index: usize, row: usize, col: usize, count: i64, n_rows: usize, n_cols: usize },

    #[error("triplet {index} ({row}, {col}) has negative count {count}")]
    NegativeCount { index: usize, row: usize, col: usize, count: i64 },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("{0} must be non-negative, got {1}")]
    Domain(&'static str, f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("row {0} has zero total count; filter empty rows before computing size factors")]
    ZeroSumRow(usize),

    #[error("objective is not finite at the starting point; re-initialize with strictly positive coefficients")]
    NonFiniteStart,

    #[error("objective became non-finite while updating {block} {index}")]
    NonFiniteUpdate { block: &'static str, index: usize },

    #[error("gram data is required for the approximate solver")]
    MissingGram,

    #[error("points {0} and {1} coincide")]
    DuplicatePoint(usize, usize),

    #[error("points {0}, {1} and {2} are collinear")]
    Collinear(usize, usize, usize),

    #[error("could not bracket a scale reaching sparsity {0}")]
    Unattainable(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
