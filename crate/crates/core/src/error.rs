use thiserror::Error;

/// Errors produced by storage, encoding, catalog and query evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// A coordinate does not fit the configured grid.
    #[error("coordinate {value} of attribute {attribute} out of range for grid side {side}")]
    CoordinateOutOfRange {
        attribute: usize,
        value: u64,
        side: u64,
    },

    /// A tuple or path has the wrong number of components.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Invalid grid parameters (dimension or height out of bounds).
    #[error("invalid grid parameters: {0}")]
    InvalidGridParams(String),

    /// Attribute sets do not line up (unknown relation, missing attribute,
    /// operands with unequal schemas, ...).
    #[error("schema error: {0}")]
    Schema(String),

    /// Malformed input data during ingestion.
    #[error("data error: {0}")]
    Data(String),

    /// Query text did not parse.
    #[error("parse error at line {line}, column {column}: {message}")]
    QueryParse {
        line: usize,
        column: usize,
        message: String,
    },

    /// A serialized index or manifest is not in the expected format.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
