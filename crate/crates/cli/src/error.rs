use std::path::PathBuf;

use cia_core::CiaError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{0}")]
    Runtime(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Validation failures of library types become config errors.
    pub fn from_validation(e: CiaError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<CiaError> for CliError {
    fn from(e: CiaError) -> Self {
        CliError::Runtime(e.to_string())
    }
}
