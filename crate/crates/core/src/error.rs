use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("structural error: {0}")]
    Structure(String),

    #[error("resource cap exceeded: level {level} needs {vertices} vertices (cap {cap})")]
    Resource { level: u32, vertices: u64, cap: u64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

