//! Multimodal recommender engine: disentangled modality encoders, multi-head
//! cross-attention between the rating matrix and fused item features, and a
//! kernelized item autoencoder, evaluated with top-K ranking metrics.

pub mod error;
pub mod numerics;

pub use error::{Error, Result};
pub mod datasets;
pub mod encoder;
pub mod autoencoder;
pub mod attention;
pub mod pipeline;
pub mod eval;
