use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: &'static str, found: Vec<u8> },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("non-positive dimension: {0:?}")]
    NonPositiveDimension([u32; 3]),

    #[error("non-positive spacing: {0:?}")]
    NonPositiveSpacing([f32; 3]),

    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("constant region")]
    ConstantRegion,

    #[error("empty mask")]
    EmptyMask,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
