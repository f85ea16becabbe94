use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    /// A Cholesky pivot was non-positive. Usually a rank-deficient covariance.
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("negative variance {value} at index {index}")]
    NegativeVariance { index: usize, value: f64 },

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// `row` counts data rows (header and comment lines excluded), `col` is the
    /// zero-based field index; both refer to the source file.
    #[error("cannot parse {cell:?} as a number at row {row}, column {col}")]
    Parse { row: usize, col: usize, cell: String },

    #[error("column mismatch at row {row}: {message}")]
    ColumnMismatch { row: usize, message: String },

    #[error("fixture file missing: {0}")]
    FixtureMissing(String),

    #[error("fixture checksum mismatch for {file}")]
    FixtureChecksum { file: String },

    #[error("no activation reproduces the fixture forward pass (best deviation {best_deviation:.4})")]
    LayoutUnresolved { best_deviation: f64 },
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
