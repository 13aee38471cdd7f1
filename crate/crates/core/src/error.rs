use std::path::PathBuf;

/// Errors surfaced by the pipeline stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {} malformed record(s), first at line {}: {}", .errors.len(), .errors[0].line, .errors[0].message)]
    Records {
        path: PathBuf,
        errors: Vec<LineError>,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient items: need {needed}, have {available}")]
    Insufficient { needed: usize, available: usize },

    #[error("undefined statistic: {0}")]
    Degenerate(String),

    #[error("lock held: {0} exists (another pass is running on this log)")]
    Locked(PathBuf),

    #[error("endpoint error: {0}")]
    Endpoint(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One rejected record in a line-oriented input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
