use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: String,
    },

    #[error("grid step mismatch: {left} vs {right}")]
    GridMismatch { left: f64, right: f64 },

    #[error("non-finite value at path {path}, step {step}")]
    NonFinite { path: usize, step: usize },

    #[error("volatility is not positive ({value}) at path {path}, step {step}")]
    NonPositiveVolatility { path: usize, step: usize, value: f64 },

    #[error("allocation function violates {constraint}: {detail}")]
    AllocationConstraint {
        constraint: &'static str,
        detail: String,
    },

    #[error("functional evaluation failed: {0}")]
    Evaluation(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: f64, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason: reason.into(),
        }
    }
}
