use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("hypothesis {hypothesis} violated: {detail}")]
    HypothesisViolation { hypothesis: &'static str, detail: String },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
