use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible regime: {0}")]
    Infeasible(String),

    #[error("empty cluster: no cube of side {d} fits inside the domain")]
    EmptyCluster { d: f64 },

    #[error("degenerate coupling: {0}")]
    Degenerate(String),

    #[error("eigenvalue {lambda} is outside the branch (must exceed 1/3)")]
    OutOfBranch { lambda: f64 },

    #[error("solver failure: {reason} (invertibility margin {margin:.6e})")]
    SolverFailure { reason: String, margin: f64 },

    #[error("LSE solve failed: {reason} ({window})")]
    LseFailure { reason: String, window: String },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("i/o error at {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }
}
