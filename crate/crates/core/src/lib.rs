//! Gated-GIN: graph convolutions with gated node and edge updates, the GIN
//! and GG-NN baselines they generalize, a 1-WL colour-refinement oracle and a
//! context-spreading simulator.
//!
//! The numeric core is generic over [`Scalar`]; the `*64` aliases below are
//! what the rest of the workspace uses.

pub mod bind;
pub mod error;
pub mod finite_diff;
pub mod graph;
pub mod layers;
pub mod mlp;
pub mod scalar;
pub mod spread;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod verify;
pub mod wl;

pub use error::{Error, Result};
pub use graph::{Dataset, Edge, Graph};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Model64 = layers::Model<f64>;
pub type Tape64 = tape::Tape<f64>;
pub type MlpParams64 = mlp::MlpParams<f64>;
