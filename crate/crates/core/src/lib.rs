//! Conditional batch normalization for visual question answering: a GRU
//! question encoder predicts per-channel scale and shift offsets for the
//! batch normalization layers of a residual image network.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod nn;
pub mod train;

pub use config::ModelConfig;
pub use error::{CheckpointError, Error, Result};
pub use model::{argmax, ForwardOutput, Model};
pub use nn::{Mode, Module, Param, RunningStats};
pub use checkpoint::Checkpoint;
pub use eval::{evaluate, Answerer, EvalReport, FamilyPrior, ModelAnswerer, OracleAnswerer, RandomAnswerer};
pub use train::{train, Adam, TrainConfig, TrainOutcome};
