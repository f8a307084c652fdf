//! Dense tensors and a tape-based reverse-mode differentiation engine,
//! generic over `f32` (training) and `f64` (gradient checking).

mod conv;
mod error;
mod gemm;
pub mod gradcheck;
mod scalar;
mod shape;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use scalar::{DType, Scalar};
pub use tape::{BinaryOp, Gradients, ReduceOp, Tape, UnaryOp, Var};
pub use tensor::Tensor;
