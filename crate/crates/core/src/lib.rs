//! Generative latent data augmentation.
//!
//! A frozen foundation model is treated as a source of embedding vectors.
//! A small task adapter is trained on those vectors, a conditional
//! diffusion model learns the distribution of one of the adapter's
//! intermediate spaces, and the adapter's later layers are fine-tuned with
//! synthesized vectors for under-represented classes and subdomains.

pub mod adapter;
pub mod condition;
pub mod diagnostics;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod store;

pub use error::{Error, Result};
