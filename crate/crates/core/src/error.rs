use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown label {label:?} for scheme {scheme}")]
    UnknownLabel { label: String, scheme: String },

    #[error("label {label:?} has {count} records; at least {required} are needed to stratify")]
    TooFewRecords {
        label: String,
        count: usize,
        required: usize,
    },

    #[error("invalid record {id}: {message}")]
    InvalidRecord { id: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("attention over an empty or fully masked set")]
    AllMasked,

    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("scheme mismatch: {0}")]
    SchemeMismatch(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by bad input data rather than by training.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Divergence { .. })
    }
}
