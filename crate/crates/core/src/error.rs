use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("channel mismatch: {0}")]
    ChannelMismatch(String),

    #[error("dilation rate must be at least 1, got {0}")]
    InvalidDilation(usize),

    #[error("kernel extent {0} is even; same padding is undefined")]
    EvenKernel(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label {0} is not 0 or 1")]
    InvalidLabel(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("infeasible dataset spec: {0}")]
    InfeasibleSpec(String),

    #[error("class {label} has {count} samples, fewer than k = {k}")]
    ClassTooSmall { label: u8, count: usize, k: usize },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },

    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("tensor count mismatch: file has {found}, configuration expects {expected}")]
    TensorCountMismatch { found: usize, expected: usize },

    #[error("shape inconsistency for {name}: file has {found:?}, configuration expects {expected:?}")]
    ShapeInconsistent {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Whether the error describes a damaged or mismatched file rather than
    /// a bad call.
    pub fn is_format_error(&self) -> bool {
        matches!(
            self,
            Error::BadMagic { .. }
                | Error::UnsupportedVersion { .. }
                | Error::Truncated(_)
                | Error::TensorCountMismatch { .. }
                | Error::ShapeInconsistent { .. }
                | Error::Malformed(_)
        )
    }
}
