use thiserror::Error;

/// Errors produced by the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration values (bad ranges, empty approach lists, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed dataset or export files; names the offending field.
    #[error("format error in `{field}`: {message}")]
    Format { field: String, message: String },

    /// Operand shapes do not match.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Problem size exceeds the configured dense-matrix budget.
    #[error(
        "capacity exceeded: dense operator needs {needed} elements, budget is {budget}; \
         reduce the image size or raise the budget"
    )]
    Capacity { needed: usize, budget: usize },

    /// Training diverged; carries the loss trace collected so far.
    #[error("training diverged: {message}")]
    Training {
        message: String,
        trace: Vec<(usize, f64)>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: msg.into(),
        }
    }

    /// Stable machine-readable tag, used by the CLI error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Format { .. } => "format",
            Error::Dimension { .. } => "dimension",
            Error::Capacity { .. } => "capacity",
            Error::Training { .. } => "training",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
