use std::path::PathBuf;

use wordsway_core::Error as CoreError;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(i32)]
pub enum ExitCode {
    Success = 0,
    Io = 1,
    Config = 2,
    Backend = 3,
    IncompleteReplay = 4,
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("backend error: {0}")]
    Backend(#[source] CoreError),

    #[error("incomplete replay: {} missing cache entries: {}", missing.len(), missing.join("; "))]
    IncompleteReplay { missing: Vec<String> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl AppError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            AppError::Config(_) | AppError::Format { .. } => ExitCode::Config,
            AppError::Backend(_) => ExitCode::Backend,
            AppError::IncompleteReplay { .. } => ExitCode::IncompleteReplay,
            AppError::Io { .. } => ExitCode::Io,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        if e.is_backend() {
            AppError::Backend(e)
        } else {
            AppError::Config(e.to_string())
        }
    }
}
