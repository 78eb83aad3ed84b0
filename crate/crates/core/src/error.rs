use thiserror::Error;

/// Errors raised by the polymer library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model parameter (n, alpha, beta, delta, ...) is invalid.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An index set violates the slope constraint or misses a sentinel.
    #[error("index set is not admissible: {0}")]
    Inadmissible(String),

    /// Two masses share an x-coordinate, so their chord has no slope.
    #[error("degenerate pair: masses {0} and {1} share an x-coordinate")]
    DegeneratePair(String, String),

    /// Exhaustive routines refuse inputs beyond their size limit.
    #[error("size error: {0}")]
    Size(String),

    /// A deterministic invariant failed during an experiment run.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
