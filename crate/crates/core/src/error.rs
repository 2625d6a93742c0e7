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

    #[error("csv parse error at record {record}: {message}")]
    Parse { record: usize, message: String },

    #[error("missing value at record {record}, column {column}")]
    MissingValue { record: usize, column: usize },

    #[error("label {value} at row {row} is outside {{0, 1}}")]
    LabelDomain { row: usize, value: f64 },

    #[error("label column {0} not found")]
    LabelColumn(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("feature count mismatch: expected {expected}, found {found}")]
    FeatureCountMismatch { expected: usize, found: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unsupported derivative order {0} (expected 1..=4)")]
    UnsupportedOrder(usize),

    #[error("degenerate leaf denominator G2 + lambda = {0}")]
    DegenerateDenominator(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model schema error: {0}")]
    Schema(String),

    #[error("unsupported model format version {0}")]
    Version(u64),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
