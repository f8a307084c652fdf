use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] cbnr_tensor::TensorError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Contract(String),
    #[error("non-finite gradient in {tensor} at step {step}")]
    NonFiniteGradient { tensor: String, step: u64 },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Dataset(#[from] miniclevr::DatasetError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },
    #[error("checkpoint truncated while reading {what}")]
    Truncated { what: String },
    #[error("bad checkpoint header: {0}")]
    Header(String),
    #[error("unknown tensor {0} in checkpoint")]
    UnknownTensor(String),
    #[error("tensor {0} missing from checkpoint")]
    MissingTensor(String),
    #[error("tensor {name}: checkpoint has {found:?}, model expects {expected:?}")]
    ShapeMismatch { name: String, found: Vec<usize>, expected: Vec<usize> },
    #[error("tensor {name}: stored as dtype code {found}, model uses {expected}")]
    DType { name: String, found: u8, expected: u8 },
    #[error("duplicate tensor {0} in checkpoint")]
    Duplicate(String),
    #[error("{0} trailing bytes after the last tensor")]
    Trailing(usize),
    #[error("checkpoint configuration differs from the requested one: {0}")]
    ConfigMismatch(String),
}
