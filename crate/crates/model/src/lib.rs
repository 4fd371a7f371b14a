//! Decoder-only transformer, optimizer, checkpoints, training loop and
//! decoding for lookahead-augmented sequences.

pub mod adamw;
pub mod checkpoint;
pub mod config;
pub mod decoder;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod ops;
pub mod params;
pub mod scalar;
pub mod schedule;
pub mod trainer;
pub mod transformer;

pub use config::{Dtype, ModelConfig};
pub use error::ModelError;
pub use scalar::Scalar;
pub use transformer::{Batch, Transformer};
