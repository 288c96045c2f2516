use std::path::PathBuf;

use thiserror::Error;

/// Failures of a CLI run, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("{stage}: {source}")]
    Numerical {
        stage: &'static str,
        #[source]
        source: bridgelab::Error,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl std::fmt::Display) -> Self {
        Self::Config { path: path.into(), message: message.to_string() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// 2 for configuration problems, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Numerical { .. } => 3,
            Self::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Labels a core error with the pipeline stage that raised it.
pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
    /// Reports a core error as a problem with the config field `path`.
    fn field(self, path: &str) -> Result<T>;
}

impl<T> Stage<T> for bridgelab::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| CliError::Numerical { stage, source })
    }

    fn field(self, path: &str) -> Result<T> {
        self.map_err(|e| CliError::config(path, e))
    }
}
