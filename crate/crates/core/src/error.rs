use thiserror::Error;

/// Errors raised by the library. Configuration-class errors are the ones a
/// caller can fix by changing inputs; the rest are runtime failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("enumeration exceeds the budget of {budget} outcomes")]
    EnumerationTooLarge { budget: usize },
    #[error("trajectory has no recorded actions")]
    MissingActions,
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("every policy in the class has infinite log-loss")]
    NoSupport,
    #[error("realizability violated: {0}")]
    Realizability(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the error stems from user-supplied inputs rather than a
    /// failure during computation.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Validation(_)
                | Error::Shape(_)
                | Error::MissingActions
                | Error::EmptyInput(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
