//! Conditional denoiser in an adapter latent space.

mod model;
mod schedule;
mod train;

pub use model::{DenoiserConfig, DenoiserModel, DenoiserNet, DiffusionBatch, NetTape};
pub use schedule::{estimate_sigma_data, NoiseSchedule};
pub use train::{train_diffusion, BatchSampling, ConditionSetup, DiffTrainConfig, DiffTrainStats};
