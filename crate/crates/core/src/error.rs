use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Malformed or inconsistent input: missing columns, bad cells, bad configs.
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: cannot parse `{value}` in column `{column}` as a number")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("no rows")]
    NoRows,
    #[error("category `{value}` of feature `{feature}` was not seen when the encoder was fitted")]
    UnseenCategory { feature: String, value: String },

    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),

    /// Input is well formed but statistically degenerate (single class, zero marginal, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    /// True for errors caused by the caller's data or configuration rather than by the library.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_)
                | Error::MissingColumn(_)
                | Error::ParseCell { .. }
                | Error::NoRows
                | Error::UnseenCategory { .. }
                | Error::DimensionMismatch { .. }
                | Error::Empty(_)
                | Error::NonFinite(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
