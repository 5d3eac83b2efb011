use thiserror::Error;

/// Errors produced by the diagnosis library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("blockage probability {0} is outside [0, 1]")]
    InvalidProbability(f64),

    /// The channel coefficient of a supported antenna is (numerically) zero,
    /// so the blockage coefficient cannot be recovered from it.
    #[error("channel coefficient at index {index} has magnitude {magnitude:e}")]
    ChannelNull { index: usize, magnitude: f64 },

    #[error("block size {block_rows}x{block_cols} does not tile a {rows}x{cols} array")]
    BlockShapeMismatch {
        rows: usize,
        cols: usize,
        block_rows: usize,
        block_cols: usize,
    },

    #[error("reference value has zero norm")]
    ZeroTruth,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Malformed input document; `context` names the file and location.
    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::DimensionMismatch(msg.into()))
}
