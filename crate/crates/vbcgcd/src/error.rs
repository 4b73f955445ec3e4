use std::path::PathBuf;

/// Errors from file formats, configuration and run orchestration.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {format} data at byte {offset}: {message}")]
    Format {
        format: &'static str,
        offset: u64,
        message: String,
    },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("class {class} has {available} samples, {required} needed")]
    InsufficientSamples {
        class: i32,
        available: usize,
        required: usize,
    },
    #[error("could not place class {class} after {attempts} attempts")]
    InfeasiblePlacement { class: usize, attempts: usize },
    #[error(transparent)]
    Core(#[from] vbcgcd_core::Error),
}

impl IoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 3 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            IoError::Config(_) => 2,
            IoError::Core(vbcgcd_core::Error::InvalidConfig(_)) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, IoError>;
