use thiserror::Error;

/// Errors raised anywhere in the lab pipeline.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch between operands ({0})")]
    GridMismatch(String),

    #[error("operator `{label}` is not Hermitian (residual {residual:.3e})")]
    NotHermitian { label: String, residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl LabError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        LabError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Configuration errors map to exit status 2 in the CLI.
    pub fn is_config(&self) -> bool {
        matches!(self, LabError::Config { .. } | LabError::InvalidGrid(_))
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
