//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not line up for an operation.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// Non-finite values were produced or supplied where finite math is required.
    #[error("numeric failure in {context}: {detail}")]
    Numeric { context: String, detail: String },

    /// An operation was called outside its contract (e.g. backward on a non-scalar).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid model or run configuration.
    #[error("invalid config: {0}")]
    Config(String),

    /// Dataset-level precondition failure (empty class, single class, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Malformed file content; `offset` is the byte position where parsing failed.
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },

    /// Metric preconditions not met (e.g. no unknown samples for AUROC).
    #[error("metric error: {0}")]
    Metric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn numeric(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            context: context.into(),
            detail: detail.into(),
        }
    }
}
