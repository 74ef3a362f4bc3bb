use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: parse error at row {row}, column {col}: unexpected token {token:?}")]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        token: String,
    },

    #[error("malformed input: {0}")]
    Structure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class {class} has {count} members, fewer than the {k} folds requested")]
    InsufficientClass { class: i8, count: usize, k: usize },

    #[error("training labels contain a single class")]
    SingleClass,

    #[error("row width {got} does not match model width {expected}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
