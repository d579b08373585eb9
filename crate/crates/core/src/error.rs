use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or sizes do not agree.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Non-finite values or a failed numeric routine.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An argument is outside its documented range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An operation was called on state that is not ready for it.
    #[error("state error: {0}")]
    State(String),

    /// A run configuration could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
