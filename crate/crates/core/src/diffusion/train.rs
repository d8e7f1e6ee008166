use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{DenoiserConfig, DenoiserModel, DiffusionBatch};
use super::schedule::{estimate_sigma_data, NoiseSchedule};
use crate::condition::{should_drop, ConditionMode, SemanticVectors};
use crate::error::{Error, Result};
use crate::nn::{EmaState, OptimizerConfig, OptimizerState};
use crate::rng;
use crate::store::{LatentDataset, LatentRecord, Split};

/// How training rows are drawn for each minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSampling {
    /// Uniform over records.
    #[default]
    Uniform,
    /// Uniform over non-empty `(class, subdomain)` cells, then over the
    /// cell's records, so sparse cells are seen as often as full ones.
    CellBalanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffTrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub cond_dropout: f64,
    pub ema_max_decay: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Estimated from the training latents when absent.
    pub sigma_data: Option<f64>,
    pub seed: u64,
    /// Loss curve resolution in iterations.
    pub log_every: u64,
    pub sampling: BatchSampling,
}

impl Default for DiffTrainConfig {
    fn default() -> Self {
        Self {
            iterations: 400_000,
            batch_size: 64,
            lr: 5e-4,
            weight_decay: 1e-4,
            cond_dropout: 0.1,
            ema_max_decay: 0.9999,
            sigma_min: 0.01,
            sigma_max: 80.0,
            sigma_data: None,
            seed: 0,
            log_every: 1000,
            sampling: BatchSampling::Uniform,
        }
    }
}

impl DiffTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 || self.log_every == 0 {
            return Err(Error::InvalidConfig(
                "iterations, batch_size and log_every must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig(
                "lr must be positive, weight_decay nonnegative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.cond_dropout) {
            return Err(Error::InvalidConfig(format!(
                "cond_dropout {} outside [0, 1]",
                self.cond_dropout
            )));
        }
        if !(0.0..1.0).contains(&self.ema_max_decay) {
            return Err(Error::InvalidConfig(format!(
                "ema_max_decay {} outside [0, 1)",
                self.ema_max_decay
            )));
        }
        Ok(())
    }
}

/// Conditioning choice for a new denoiser.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConditionSetup {
    pub mode: ConditionMode,
    /// Required for [`ConditionMode::ClassPlusSemanticVector`].
    pub semantic: Option<SemanticVectors>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffTrainStats {
    pub iterations: u64,
    pub sigma_data: f64,
    /// Observed share of dropped conditions over all training rows.
    pub null_fraction: f64,
    /// `(iteration, mean loss over the preceding window)`.
    pub loss_curve: Vec<(u64, f64)>,
}

/// Index groups for minibatch draws: a group is picked uniformly, then a
/// record inside it.
fn sampling_groups(train: &[&LatentRecord], sampling: BatchSampling) -> Vec<Vec<usize>> {
    match sampling {
        BatchSampling::Uniform => vec![(0..train.len()).collect()],
        BatchSampling::CellBalanced => {
            let mut by_cell = BTreeMap::<(u32, u32), Vec<usize>>::new();
            for (i, r) in train.iter().enumerate() {
                by_cell
                    .entry((r.class_id, r.subdomain_id))
                    .or_default()
                    .push(i);
            }
            by_cell.into_values().collect()
        }
    }
}

/// Train a conditional denoiser on the train split of `latents` and return
/// it carrying the EMA weights.
pub fn train_diffusion(
    latents: &LatentDataset,
    setup: &ConditionSetup,
    model_cfg: &DenoiserConfig,
    cfg: &DiffTrainConfig,
) -> Result<(DenoiserModel, DiffTrainStats)> {
    cfg.validate()?;
    let train: Vec<_> = latents.split(Split::Train).collect();
    if train.is_empty() {
        return Err(Error::EmptyDataset("no training latents".into()));
    }
    let manifest = latents.manifest();
    let m = latents.dim();
    let sigma_data = match cfg.sigma_data {
        Some(s) => s,
        None => {
            let s = estimate_sigma_data(train.iter().map(|r| r.vector.as_slice()))?;
            // a constant dataset has no spread; fall back to unit scale
            if s > 1e-6 {
                s
            } else {
                1.0
            }
        }
    };
    let schedule = NoiseSchedule::new(cfg.sigma_min, cfg.sigma_max, sigma_data)?;
    let extra = match setup.mode {
        ConditionMode::ClassOnly => 0,
        ConditionMode::ClassPlusSubdomainLatent => m,
        ConditionMode::ClassPlusSemanticVector => {
            setup
                .semantic
                .as_ref()
                .ok_or_else(|| {
                    Error::MissingCondition("semantic mode needs semantic vectors".into())
                })?
                .width
        }
    };
    let mut model = DenoiserModel::new(
        m, manifest.c, setup.mode, extra, *model_cfg, schedule, cfg.seed,
    )?;
    if setup.mode == ConditionMode::ClassPlusSubdomainLatent {
        let pools = (0..manifest.k)
            .map(|k| {
                let rows: Vec<f32> = train
                    .iter()
                    .filter(|r| r.subdomain_id as usize == k)
                    .flat_map(|r| r.vector.iter().copied())
                    .collect();
                Array2::from_shape_vec((rows.len() / m, m), rows).unwrap()
            })
            .collect();
        model.net.condition.set_subdomain_pool(pools)?;
    }
    if let Some(sem) = &setup.semantic {
        model.net.condition.set_semantic(sem.clone())?;
    }

    let mut opt = OptimizerState::new(
        OptimizerConfig::adamw(cfg.lr, cfg.weight_decay),
        &model.params,
    );
    let mut ema = EmaState::new(&model.params, cfg.ema_max_decay);
    let b = cfg.batch_size;
    let width = model_cfg.width;
    let keep = 1.0 - model_cfg.dropout;
    let (mut nulls, mut window, mut window_n) = (0u64, 0.0f64, 0u64);
    let mut loss_curve = Vec::new();
    let cells = sampling_groups(&train, cfg.sampling);
    for t in 0..cfg.iterations {
        let mut r = rng::stream(cfg.seed, "diffusion-batch", &[t]);
        let mut x0 = Array2::<f32>::zeros((b, m));
        let mut cond = Vec::with_capacity(b);
        let mut sigmas = Vec::with_capacity(b);
        for i in 0..b {
            // a single cell skips the draw, keeping uniform streams unchanged
            let cell = match cells.len() {
                1 => &cells[0],
                n => &cells[r.random_range(0..n)],
            };
            let rec = train[cell[r.random_range(0..cell.len())]];
            x0.row_mut(i)
                .assign(&ndarray::ArrayView1::from(&rec.vector));
            sigmas.push(model.schedule.sample_sigma(&mut r));
            cond.push(model.net.condition.resolve(
                rec.class_id as usize,
                rec.subdomain_id as usize,
                &mut r,
            )?);
        }
        let noise = Array2::from_shape_simple_fn((b, m), || StandardNormal.sample(&mut r));
        let dropped: Vec<bool> = (0..b)
            .map(|_| should_drop(cfg.cond_dropout, &mut r))
            .collect();
        nulls += dropped.iter().filter(|&&d| d).count() as u64;
        let masks = if model_cfg.dropout > 0.0 {
            let scale = (1.0 / keep) as f32;
            (0..model_cfg.depth)
                .map(|_| {
                    Array2::from_shape_simple_fn((b, width), || {
                        if r.random::<f64>() < keep {
                            scale
                        } else {
                            0.0
                        }
                    })
                })
                .collect()
        } else {
            Vec::new()
        };
        let batch = DiffusionBatch {
            x0,
            noise,
            sigmas,
            cond,
            dropped,
            masks,
        };
        model.params.zero_grad();
        let loss = model
            .net
            .loss(&mut model.params, &model.schedule, &batch, true)?;
        opt.step(&mut model.params)?;
        ema.update(&model.params)?;
        window += loss as f64;
        window_n += 1;
        if (t + 1) % cfg.log_every == 0 || t + 1 == cfg.iterations {
            loss_curve.push((t + 1, window / window_n as f64));
            window = 0.0;
            window_n = 0;
        }
    }
    model.params = ema.shadow;
    let stats = DiffTrainStats {
        iterations: cfg.iterations,
        sigma_data: model.schedule.sigma_data,
        null_fraction: nulls as f64 / (cfg.iterations * b as u64) as f64,
        loss_curve,
    };
    Ok((model, stats))
}
