use std::fmt;
use std::path::PathBuf;

use csft_core::Error as CoreError;

/// Failure of a subcommand, carrying its exit status.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    MissingInput { path: PathBuf, producer: &'static str },
    Endpoint(String),
    Other(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingInput { .. } => 3,
            CliError::Endpoint(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::MissingInput { path, producer } => write!(
                f,
                "missing input {}; run `csft {producer}` first to produce it",
                path.display()
            ),
            CliError::Endpoint(m) => write!(f, "endpoint failure: {m}"),
            CliError::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(m) => CliError::Config(m),
            CoreError::Endpoint(m) => CliError::Endpoint(m),
            other => CliError::Other(other.into()),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Other(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(e.into())
    }
}
