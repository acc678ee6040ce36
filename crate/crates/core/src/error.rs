use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the stochastic-computing library.
#[derive(Debug, Error)]
pub enum ScError {
    #[error("bitstream length must be positive")]
    EmptyStream,

    #[error("bitstream length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("LFSR state must be nonzero")]
    ZeroState,

    #[error("invalid LFSR configuration: {0}")]
    InvalidLfsr(String),

    #[error("width mismatch: value is {value} bits, generator is {generator} bits")]
    WidthMismatch { value: u32, generator: u32 },

    #[error("level {raw} does not fit in {width} bits")]
    LevelOutOfRange { raw: u32, width: u32 },

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("need at least {min} inputs, got {got}")]
    TooFewInputs { min: usize, got: usize },

    #[error("fan-in mismatch: neuron expects {expected} inputs, got {got}")]
    FanInMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("non-finite weight in layer {layer}")]
    NonFiniteWeight { layer: usize },

    #[error("result sets differ: {0}")]
    ResultMismatch(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: parse error at byte offset {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = ScError> = std::result::Result<T, E>;
