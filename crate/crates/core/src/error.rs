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

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    /// Input does not follow the expected file format (bad header, bad enum value, ...).
    #[error("format error: {0}")]
    Format(String),

    /// A CSV header differs from the expected schema.
    #[error("schema mismatch in {file}: missing columns {missing:?}, unexpected columns {unexpected:?}")]
    SchemaMismatch {
        file: String,
        missing: Vec<String>,
        unexpected: Vec<String>,
    },

    #[error("insufficient support: {0}")]
    InsufficientSupport(String),

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A pipeline stage was invoked before the stage that produces its inputs.
    #[error("missing stage: {stage} (expected {path})")]
    MissingStage { stage: String, path: PathBuf },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
