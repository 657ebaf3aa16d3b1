use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Shapes, levels or operator sizes that do not fit together.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A documented precondition of an operation was violated.
    #[error("contract violated: {0}")]
    Contract(String),
    /// User-facing input rejected by validation.
    #[error("invalid input: {0}")]
    Validation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
