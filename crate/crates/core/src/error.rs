use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}, column `{column}`: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },
    #[error("outcome column `{0}` not found in header")]
    MissingColumn(String),
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("column {0} is constant")]
    ConstantColumn(usize),
    #[error("feature index {index} out of range for {p} columns")]
    IndexOutOfRange { index: usize, p: usize },
    #[error("invalid feature subset: {0}")]
    InvalidSubset(String),
    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("not enough observations: {0}")]
    TooFewObservations(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("{0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
