use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("gradient error: {0}")]
    Gradient(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("unknown preset `{0}` (expected one of tiny, S, M, L)")]
    UnknownPreset(String),

    #[error("bad format: {0}")]
    Format(String),

    #[error("unsupported version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("video error: {0}")]
    Video(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("png decoding: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("png encoding: {0}")]
    PngEncode(#[from] png::EncodingError),
}
