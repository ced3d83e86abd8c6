use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input; `line` is 1-based when the input is line oriented.
    #[error("data format error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    DataFormat { line: Option<usize>, message: String },

    #[error("duplicate document id {0:?}")]
    DuplicateId(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("dimension mismatch: model expects {expected} features, input has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unknown disease {0:?}")]
    UnknownDisease(String),

    #[error("incompatible model: {0}")]
    Compatibility(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(line: Option<usize>, message: impl Into<String>) -> Self {
        Error::DataFormat {
            line,
            message: message.into(),
        }
    }
}
