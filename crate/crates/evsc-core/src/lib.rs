//! Event extraction from synthetic grid-feature videos.
//!
//! The pipeline, bottom to top: a tensor tape with reverse-mode autodiff
//! ([`tensor`]), a procedural clip generator ([`scene`]), object state /
//! motion / interaction embeddings ([`embed`]), an argument-interaction
//! encoder with a verb head ([`encoder`]), a semantic-role sequence decoder
//! ([`decoder`]), caption and classification metrics ([`metrics`]), and the
//! experiment harness the CLI drives ([`harness`]).

pub mod decoder;
pub mod embed;
pub mod encoder;
pub mod harness;
pub mod metrics;
pub mod scene;
pub mod tensor;

pub use tensor::{AdamState, ParamStore, Tape, Tensor, TensorError, TensorId, TensorResult};
