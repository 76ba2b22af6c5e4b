//! Shared error and result types.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for task loading, environment stepping, learning, and
/// evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// A task, config, or checkpoint file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    /// A structural rule of a task or data file was violated.
    #[error("validation error: {0}")]
    Validation(String),
    /// A runtime configuration value is out of range or inconsistent.
    #[error("config error: {0}")]
    Config(String),
    /// Attempt to complete a sub-task that is not currently available.
    #[error("sub-task {0} is not available in the current state")]
    NotAvailable(u16),
    /// Attempt to step an episode that has already terminated.
    #[error("episode is terminal; start a new one before stepping")]
    Terminal,
    /// An array, index, or encoding did not match the expected shape.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Exhaustive search exceeded its state budget.
    #[error("search budget exceeded: {0}")]
    Budget(String),
    /// A generator spec could not be satisfied within the retry budget.
    #[error("infeasible spec: {0}")]
    Infeasible(String),
    /// A table or action index was outside its valid range.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
