//! End-to-end runs: scenario, stage 1, latent tapping, stage 2, generation,
//! stage 3, evaluation, plus the Latent Filling baseline and sweeps.

mod config;
mod isolation;
mod latent_fill;
mod run;
mod sweep;

pub use config::{DataSource, PipelineConfig};
pub use isolation::{partition, TestSplit};
pub use latent_fill::latent_fill_augment;
pub use run::{
    augmentation_cells, run_gelda, tap_dataset, AugCells, LatentFillOutcome, RunReport, StageTiming,
};
pub use sweep::{sweep, sweep_table, SweepAxis, SweepEntry};
