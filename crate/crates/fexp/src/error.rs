use std::path::PathBuf;

use thiserror::Error;

/// Failures of the command-line layer, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Csv { path: PathBuf, detail: String },
    #[error(transparent)]
    Format(#[from] crate::checkpoint::FormatError),
    #[error(transparent)]
    Numerical(#[from] fexp_core::Error),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }

    /// 0 success, 1 usage/config, 2 numerical failure, 3 failed acceptance check.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) | AppError::Config(_) | AppError::Io { .. } | AppError::Csv { .. } | AppError::Format(_) => 1,
            AppError::Numerical(_) => 2,
            AppError::CheckFailed(_) => 3,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
