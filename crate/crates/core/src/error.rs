use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the domain of a kernel or functional.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two agents occupy the same position, so the singular kernel is undefined.
    #[error("agents {0} and {1} coincide")]
    Collision(usize, usize),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("infeasible scenario: {0}")]
    Infeasible(String),

    /// Configuration rejected; `pointer` is the JSON pointer of the offending field.
    #[error("config error at '{pointer}': {message}")]
    Config { pointer: String, message: String },

    #[error("oracle hit the collision threshold at step {step} (agents {pair:?})")]
    OracleCollision { step: u64, pair: (usize, usize) },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
