use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a documented range or finiteness requirement.
    #[error("rejected input: {0}")]
    InvalidInput(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("normalization error: distance {z} exceeds z_max {z_max}")]
    Normalization { z: f64, z_max: f64 },

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("no valid pixels to fill holes from")]
    Unfillable,

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Flow(#[from] FlowFormatError),

    #[error(transparent)]
    Image(#[from] ImageFormatError),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("metadata error: {0}")]
    Metadata(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Attach the pipeline stage that produced this error.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

/// Parse failures of the D2FL flow container.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowFormatError {
    #[error("bad magic: expected \"D2FL\", found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported flow format version {found} (expected 1)")]
    BadVersion { found: u32 },
    #[error("unsupported channel count {found} (expected 2)")]
    BadChannels { found: u32 },
    #[error("truncated flow file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("non-finite flow value at pixel ({x}, {y})")]
    NonFinite { x: usize, y: usize },
}

#[derive(Debug, Error)]
pub enum ImageFormatError {
    #[error("unsupported PNG layout: {color} at {bits}-bit (expected {expected})")]
    Unsupported {
        color: String,
        bits: u8,
        expected: &'static str,
    },
    #[error("png decode failed: {0}")]
    Decode(String),
    #[error("png encode failed: {0}")]
    Encode(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid config value `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    pub(crate) fn invalid(field: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
