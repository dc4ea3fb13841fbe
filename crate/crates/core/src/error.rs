use thiserror::Error;

/// Errors surfaced by the library. IO-adjacent variants wrap the underlying
/// cause; validation variants carry the offending value so callers can report
/// actionable messages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported weave size: {0}")]
    UnsupportedWeave(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bad file format: {0}")]
    BadFormat(String),

    #[error("topology mismatch: expected hash {expected:#018x}, file has {found:#018x}")]
    TopologyMismatch { expected: u64, found: u64 },

    #[error("incompatible dataset headers: {0}")]
    HeaderMismatch(String),

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("scene error: {0}")]
    Scene(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(String),
}

pub type Result<T> = std::result::Result<T, Error>;
