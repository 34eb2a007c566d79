//! Dense arrays, differentiable operations, Adam and gradient checking.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod init;
pub mod param;
pub mod real;
pub mod rng;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use graph::{layer_norm_rows, sigmoid, softmax_rows, Graph, Var};
pub use param::{ParamId, ParamStore, Parameter};
pub use real::Real;
pub use rng::{stream_rng, substream_rng, Stream, StreamRng};
