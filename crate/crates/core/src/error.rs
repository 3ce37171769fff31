//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmiError {
    /// A caller passed vectors whose dimensions do not match the model contract.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// An operation needed the marginal likelihood log p(Y|phi) but the model
    /// does not provide one.
    #[error("model `{model}` does not provide a closed-form log p(Y|phi) marginal")]
    MissingMarginal { model: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("state space too large: {0}")]
    Capacity(String),

    #[error("invalid data: {0}")]
    DataValidation(String),

    #[error("selection failed: {0}")]
    Selection(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SmiError>;
