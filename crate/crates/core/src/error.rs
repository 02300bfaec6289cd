use std::io;

/// Errors raised anywhere in the steering pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch in {dim}: expected {expected}, found {found}")]
    ShapeMismatch {
        op: &'static str,
        dim: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("backward called on an empty tape (no forward pass recorded)")]
    EmptyTape,
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("keep probability must lie in (0, 1], got {0}")]
    InvalidKeepProb(f64),
    #[error("conv layer {layer}: {axis} extent {extent} is smaller than kernel {kernel}")]
    LayerUnderflow {
        layer: usize,
        axis: &'static str,
        extent: usize,
        kernel: usize,
    },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("missing configuration key `{0}`")]
    MissingKey(String),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("bin edges must be strictly increasing")]
    NonMonotoneEdges,
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("variance must be non-negative, got {0}")]
    NegativeVariance(f64),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("corrupt file at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
