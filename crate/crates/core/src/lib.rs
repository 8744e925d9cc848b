//! Quasi-eigenvector bases for the latent space of a small MNIST GAN.
//!
//! The pipeline trains a generator/discriminator pair, a classifier and an
//! encoder, collects labelled latent sets, orthogonalizes their means into a
//! basis with `⟨ξ_a|ξ_b⟩ = C δ_ab`, and uses that basis for latent spectral
//! decomposition (classification, truncation denoising) and rank-1 rotation
//! operators between label directions.

pub mod basis;
pub mod config;
pub mod data;
pub mod error;
pub mod image;
pub mod lsd;
pub mod models;
pub mod nn;
pub mod operators;
pub mod pipeline;
pub mod rng;
pub mod tensor;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
pub use rng::SeededRng;
pub use tensor::{Real, Tensor};
