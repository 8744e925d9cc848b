//! Minimal dense-network engine: layers, reverse-mode gradients, Adam and losses.

pub mod adam;
pub mod dense;
pub mod loss;
pub mod network;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dense::{dense_forward, Activation, Dense};
pub use network::{Gradients, Mlp, OutputGrad, Trace};
