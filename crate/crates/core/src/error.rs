use thiserror::Error;

/// Errors raised by the simulation primitives and pipelines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MsdError {
    #[error("non-finite value")]
    NonFinite,

    #[error("E8M0 overflow: exponent {0} outside [-127, 127]")]
    E8m0Overflow(i32),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dimension {dim} is not a multiple of {block}")]
    BlockMisaligned { dim: usize, block: usize },

    #[error("degenerate reference")]
    DegenerateReference,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, MsdError>;
