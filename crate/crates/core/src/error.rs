use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}, column '{column}': cannot parse '{value}' as a number")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("label column '{0}' not found in header")]
    MissingLabelColumn(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite {what} at epoch {epoch}, batch {batch}")]
    NonFinite {
        what: String,
        epoch: usize,
        batch: usize,
    },

    #[error("non-finite gradient entry in parameter group {group}")]
    NonFiniteGradient { group: usize },

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("binning spec: {0}")]
    BinningFormat(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::NonFinite { .. } | Error::NonFiniteGradient { .. }
        )
    }
}
