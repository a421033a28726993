//! Dense feedforward networks with exact reverse-mode gradients, plus Adam.

mod activation;
mod adam;
mod dense;
mod kernels;

pub use activation::Activation;
pub use adam::{adam_step, AdamConfig, AdamState};
pub use dense::{DenseNet, InputScaling, Tape};
