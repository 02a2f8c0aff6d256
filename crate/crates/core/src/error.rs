//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("discretization error: {0}")]
    Discretization(String),

    #[error("interpenetration: {0}")]
    Interpenetration(String),

    #[error("line search stagnated: {0}")]
    Stagnation(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("indexing error: {0}")]
    Indexing(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("solver failure at frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<SimError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, SimError>;
