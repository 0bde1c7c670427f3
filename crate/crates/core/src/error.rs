use thiserror::Error;

/// Errors produced anywhere in the optimization stack.
#[derive(Debug, Error)]
pub enum LeonError {
    /// A design, vector, or document does not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A numeric routine produced or received a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A precondition on the arguments was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Structured-output parsing failed.
    #[error("parse error: {0}")]
    Parse(String),

    /// An HTTP endpoint could not be reached or returned an unusable response.
    #[error("transport error: {0}")]
    Transport(String),

    /// The surrogate evaluation budget was exhausted.
    #[error("surrogate budget of {0} evaluations exhausted")]
    BudgetExhausted(usize),

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = LeonError> = std::result::Result<T, E>;

pub(crate) fn schema(msg: impl Into<String>) -> LeonError {
    LeonError::Schema(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> LeonError {
    LeonError::InvalidInput(msg.into())
}
