use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("item index {index} out of range for {n} items")]
    ItemOutOfRange { index: usize, n: usize },

    #[error("knapsack index {index} out of range for {m} knapsacks")]
    KnapsackOutOfRange { index: usize, m: usize },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "LP relaxation has {vars} variables, above the dense simplex limit of {limit}; \
         use a bound-only path (fractional greedy or Lagrangian bound) instead"
    )]
    LpTooLarge { vars: usize, limit: usize },

    #[error("LP is unbounded")]
    Unbounded,

    #[error("inconsistent input: {0}")]
    Inconsistent(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
