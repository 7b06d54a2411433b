//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by games, graphs, certificates and the hybrid engine.
///
/// Divergence and Zeno-guard trips are *not* errors: they are measured
/// outcomes recorded as arc annotations (see [`crate::engine::Annotations`]).
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("singular matrix: {0}")]
    SingularMatrix(String),
    #[error("graph error: {0}")]
    Graph(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
