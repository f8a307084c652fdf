use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{op}: invalid geometry: {msg}")]
    Geometry { op: &'static str, msg: String },
    #[error("{op}: index {index} out of range for extent {bound}")]
    Index { op: &'static str, index: usize, bound: usize },
    #[error("{op}: {msg}")]
    Domain { op: &'static str, msg: String },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("buffer of length {len} does not match shape {shape:?}")]
    Buffer { shape: Vec<usize>, len: usize },
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
