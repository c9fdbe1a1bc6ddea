//! Dense-tensor arithmetic with tape-based reverse-mode differentiation.
//!
//! Everything is generic over the element type: training runs at `f32`,
//! verification (finite-difference gradient checks) at `f64`. Tensors are
//! plain values; a [`Tape`] records one forward pass and replays it in
//! reverse to populate gradients.

mod kernels;
mod optim;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use kernels::{cross_entropy, layer_norm, matmul, softmax_rows};
pub use optim::{adam_step, AdamParams, AdamState};
pub use params::{ParamId, ParamStore};
pub use scalar::Scalar;
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
