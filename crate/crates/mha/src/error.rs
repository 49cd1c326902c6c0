use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration: invalid geometry, process spec, or experiment file.
    #[error("configuration error: {0}")]
    Config(String),

    /// An observation fell outside the cube `[-D, D]^d`.
    #[error("observation out of range: {0}")]
    OutOfRange(String),

    /// A loss function returned a non-finite value.
    #[error("misbehaving loss: {0}")]
    NonFinite(String),

    /// The requested closed-form law does not exist for this process kind.
    #[error("unsupported law: {0}")]
    UnsupportedLaw(String),

    /// A numeric routine failed (divergence, cross-check mismatch).
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
