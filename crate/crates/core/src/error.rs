use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A model assumption check failed and was not waived.
    #[error("assumption check failed: {0}")]
    Validation(String),

    /// The limiting diffusion has no stationary law (the stability margin is not positive).
    #[error("stability condition violated: {0}")]
    Stability(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    /// The unnormalized stationary density does not decay within the search window.
    #[error("stationary density not integrable: {0}")]
    NonIntegrable(String),

    /// Attempted to pool results produced from different configurations.
    #[error("cannot merge results: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
