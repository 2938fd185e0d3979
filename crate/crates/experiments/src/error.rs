use std::path::PathBuf;

use thiserror::Error;

/// Failures of a command, mapped onto process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("invalid `{field}` in [{section}]: {reason}")]
    Field {
        section: String,
        field: String,
        reason: String,
    },

    #[error("cannot parse {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Solver(#[from] fastpart::Error),

    #[error("not certified")]
    NotCertified,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Field { .. } | CliError::Parse { .. } => 2,
            CliError::Solver(fastpart::Error::InvalidParameter { .. }) => 2,
            CliError::Io { .. } | CliError::Solver(_) => 1,
            CliError::NotCertified => 3,
        }
    }

    pub(crate) fn field(section: &str, field: &str, reason: impl Into<String>) -> Self {
        CliError::Field {
            section: section.to_string(),
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
