use std::path::PathBuf;

use thiserror::Error;

/// Failure of a CLI run. `code()` is the stable, machine-readable part of
/// the one-line error report.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    Compute(#[from] ridgenet_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Input(_) => "input",
            Self::Compute(_) => "compute",
            Self::Io { .. } => "io",
        }
    }

    /// `error[<code>]: <message>` on a single line.
    pub fn report(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {msg}", self.code())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

pub type CliResult<T> = Result<T, CliError>;
