use thiserror::Error;

pub type Result<T> = std::result::Result<T, MtdError>;

/// Failure categories shared by every stage of the pipeline.
///
/// The categories map one-to-one onto the CLI exit codes, see
/// [`MtdError::exit_code`].
#[derive(Debug, Error)]
pub enum MtdError {
    /// Invalid argument, incompatible types or mismatched dimensions.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid or inconsistent configuration document.
    #[error("config error: {0}")]
    Config(String),

    /// The requested occurrences do not fit in the observation.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// A modelling hypothesis (non-vanishing DFT, non-vanishing edges, ...)
    /// does not hold for the data at hand.
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    /// The operation is not defined for the given group distribution.
    #[error("unsupported distribution: {0}")]
    Unsupported(String),

    /// Malformed file contents.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl MtdError {
    pub fn domain(msg: impl Into<String>) -> Self {
        MtdError::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        MtdError::Config(msg.into())
    }

    pub fn capacity(msg: impl Into<String>) -> Self {
        MtdError::Capacity(msg.into())
    }

    pub fn hypothesis(msg: impl Into<String>) -> Self {
        MtdError::Hypothesis(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        MtdError::Format(msg.into())
    }

    /// Process exit code: 2 config/domain, 3 capacity, 4 I/O or format,
    /// 5 model-hypothesis violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            MtdError::Domain(_) | MtdError::Config(_) | MtdError::Unsupported(_) => 2,
            MtdError::Capacity(_) => 3,
            MtdError::Format(_) | MtdError::Io(_) | MtdError::Json(_) => 4,
            MtdError::Hypothesis(_) => 5,
        }
    }
}
