use std::path::PathBuf;

use glomseg_core::Error as CoreError;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl PipelineError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => EXIT_CONFIG,
            PipelineError::Data(_) | PipelineError::Image { .. } => EXIT_DATA,
            PipelineError::Io { .. } => EXIT_RUNTIME,
            PipelineError::Core(e) => match e {
                CoreError::InvalidArgument(_) | CoreError::UnknownClass { .. } | CoreError::InvalidSpec(_) => EXIT_CONFIG,
                CoreError::NonFiniteLoss { .. } => EXIT_RUNTIME,
                _ => EXIT_DATA,
            },
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;
