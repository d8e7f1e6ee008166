//! Noise grids, guidance and integrators, and augmentation-set generation.

use std::path::Path;

use ndarray::{Array2, Zip};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffusion::{DenoiserModel, NoiseSchedule};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::store::{write_dataset, DatasetManifest, LatentDataset, LatentRecord, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    #[default]
    EulerAncestral,
    /// Two-stage stochastic DPM-Solver++ with its midpoint at half the
    /// log-sigma step and full ancestral noise (eta = 1).
    DpmppSde,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub steps: usize,
    pub cfg_scale: f64,
    pub integrator: Integrator,
    pub rho: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            cfg_scale: 1.2,
            integrator: Integrator::EulerAncestral,
            rho: 7.0,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig(
                "sampler needs at least one step".into(),
            ));
        }
        if !(self.cfg_scale >= 0.0) || !self.cfg_scale.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "cfg_scale {} must be >= 0",
                self.cfg_scale
            )));
        }
        if !(self.rho > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "rho {} must be positive",
                self.rho
            )));
        }
        Ok(())
    }
}

/// Karras grid of `n` decreasing sigmas from `sigma_max` to `sigma_min`,
/// followed by a terminal 0.
pub fn karras_sigmas(n: usize, schedule: &NoiseSchedule, rho: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidConfig("karras grid needs n >= 1".into()));
    }
    let hi = schedule.sigma_max.powf(1.0 / rho);
    let lo = schedule.sigma_min.powf(1.0 / rho);
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 {
                schedule.sigma_max
            } else if i == n - 1 {
                schedule.sigma_min
            } else {
                (hi + i as f64 / (n - 1) as f64 * (lo - hi)).powf(rho)
            }
        })
        .collect();
    out.push(0.0);
    Ok(out)
}

/// `d_uncond + scale * (d_cond - d_uncond)`; scales 0 and 1 return the
/// corresponding input exactly.
pub fn cfg_combine(d_cond: &[f32], d_uncond: &[f32], scale: f64) -> Result<Vec<f32>> {
    if d_cond.len() != d_uncond.len() {
        return Err(Error::dims("guidance inputs", d_cond.len(), d_uncond.len()));
    }
    Ok(d_cond
        .iter()
        .zip(d_uncond)
        .map(|(&c, &u)| combine(c, u, scale))
        .collect())
}

fn combine(c: f32, u: f32, scale: f64) -> f32 {
    if scale == 1.0 {
        c
    } else if scale == 0.0 {
        u
    } else {
        (u as f64 + scale * (c as f64 - u as f64)) as f32
    }
}

/// Anything that maps noisy latents at a noise level to clean estimates.
pub trait Denoise {
    fn latent_dim(&self) -> usize;
    fn schedule(&self) -> NoiseSchedule;
    /// Rows of `x` and `cond` correspond.
    fn denoise(&self, x: &Array2<f32>, sigma: f64, cond: &Array2<f32>) -> Result<Array2<f32>>;
}

impl Denoise for DenoiserModel {
    fn latent_dim(&self) -> usize {
        self.net.latent_dim
    }

    fn schedule(&self) -> NoiseSchedule {
        self.schedule
    }

    fn denoise(&self, x: &Array2<f32>, sigma: f64, cond: &Array2<f32>) -> Result<Array2<f32>> {
        self.denoise_batch(x, sigma, cond)
    }
}

fn guided<D: Denoise + ?Sized>(
    model: &D,
    x: &Array2<f32>,
    sigma: f64,
    cond: &Array2<f32>,
    null: Option<&Array2<f32>>,
    scale: f64,
) -> Result<Array2<f32>> {
    match null {
        None => model.denoise(x, sigma, cond),
        Some(_) if scale == 1.0 => model.denoise(x, sigma, cond),
        Some(n) if scale == 0.0 => model.denoise(x, sigma, n),
        Some(n) => {
            let dc = model.denoise(x, sigma, cond)?;
            let du = model.denoise(x, sigma, n)?;
            Ok(Zip::from(&dc)
                .and(&du)
                .map_collect(|&c, &u| combine(c, u, scale)))
        }
    }
}

fn gaussian_rows(rows: usize, cols: usize, rngs: &mut [StreamRng]) -> Array2<f32> {
    let mut out = Array2::zeros((rows, cols));
    for (mut row, r) in out.rows_mut().into_iter().zip(rngs.iter_mut()) {
        row.iter_mut().for_each(|v| *v = StandardNormal.sample(r));
    }
    out
}

/// `mix * x + (1 - mix) * d + noise_scale * eps`.
fn ancestral_update(
    x: &Array2<f32>,
    d: &Array2<f32>,
    mix: f64,
    noise_scale: f64,
    eps: &Array2<f32>,
) -> Array2<f32> {
    Zip::from(x).and(d).and(eps).map_collect(|&x, &d, &e| {
        (d as f64 + mix * (x as f64 - d as f64) + noise_scale * e as f64) as f32
    })
}

fn ancestral_step(from: f64, to: f64) -> (f64, f64) {
    let up = to.min(to * ((from * from - to * to).max(0.0)).sqrt() / from);
    let down = (to * to - up * up).max(0.0).sqrt();
    (down, up)
}

/// Integrate from pure noise along `sigmas` (ending in 0). `observe` sees
/// the state after initialization (index 0) and after every step.
#[allow(clippy::too_many_arguments)]
pub fn sample_with<D: Denoise + ?Sized>(
    model: &D,
    sigmas: &[f64],
    cond: &Array2<f32>,
    null: Option<&Array2<f32>>,
    cfg: &SamplerConfig,
    rngs: &mut [StreamRng],
    mut observe: impl FnMut(usize, &Array2<f32>),
) -> Result<Array2<f32>> {
    cfg.validate()?;
    let b = cond.nrows();
    if rngs.len() != b {
        return Err(Error::dims("sampler streams", b, rngs.len()));
    }
    if let Some(n) = null {
        if n.dim() != cond.dim() {
            return Err(Error::dims("null conditions", cond.len(), n.len()));
        }
    }
    if sigmas.len() < 2 || *sigmas.last().unwrap() != 0.0 {
        return Err(Error::InvalidConfig(
            "sigma grid must have a terminal 0".into(),
        ));
    }
    let m = model.latent_dim();
    let mut x = gaussian_rows(b, m, rngs);
    x.mapv_inplace(|v| (v as f64 * sigmas[0]) as f32);
    observe(0, &x);
    for i in 0..sigmas.len() - 1 {
        let (sigma, next) = (sigmas[i], sigmas[i + 1]);
        let d = guided(model, &x, sigma, cond, null, cfg.cfg_scale)?;
        x = if next == 0.0 {
            d
        } else {
            match cfg.integrator {
                Integrator::Euler => {
                    let dt = next - sigma;
                    Zip::from(&x).and(&d).map_collect(|&x, &d| {
                        (x as f64 + dt * (x as f64 - d as f64) / sigma) as f32
                    })
                }
                Integrator::EulerAncestral => {
                    let (down, up) = ancestral_step(sigma, next);
                    let eps = gaussian_rows(b, m, rngs);
                    ancestral_update(&x, &d, down / sigma, up, &eps)
                }
                Integrator::DpmppSde => {
                    // Midpoint in log-sigma. Both noise draws are normalized
                    // increments of one Brownian path in sigma-time, over
                    // [sigma, mid] and [sigma, next].
                    let mid = (sigma * next).sqrt();
                    let e1 = gaussian_rows(b, m, rngs);
                    let e2 = gaussian_rows(b, m, rngs);
                    let (w1, w2) = ((sigma - mid).sqrt(), (mid - next).sqrt());
                    let norm = (sigma - next).sqrt();
                    let e_full = Zip::from(&e1)
                        .and(&e2)
                        .map_collect(|&a, &b| ((w1 * a as f64 + w2 * b as f64) / norm) as f32);
                    let (down, up) = ancestral_step(sigma, mid);
                    let x_mid = ancestral_update(&x, &d, down / sigma, up, &e1);
                    let d_mid = guided(model, &x_mid, mid, cond, null, cfg.cfg_scale)?;
                    let (down, up) = ancestral_step(sigma, next);
                    ancestral_update(&x, &d_mid, down / sigma, up, &e_full)
                }
            }
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite sampler state at step {i}"
            )));
        }
        observe(i + 1, &x);
    }
    Ok(x)
}

/// Sample one batch on the model's Karras grid.
pub fn sample_batch<D: Denoise + ?Sized>(
    model: &D,
    cond: &Array2<f32>,
    null: Option<&Array2<f32>>,
    cfg: &SamplerConfig,
    rngs: &mut [StreamRng],
) -> Result<Array2<f32>> {
    let sigmas = karras_sigmas(cfg.steps, &model.schedule(), cfg.rho)?;
    sample_with(model, &sigmas, cond, null, cfg, rngs, |_, _| {})
}

/// Sample a single latent for `(class_id, subdomain_id)`; the condition is
/// built from the same stream that then drives the noise.
pub fn sample_one(
    model: &DenoiserModel,
    class_id: usize,
    subdomain_id: usize,
    cfg: &SamplerConfig,
    rng: &mut StreamRng,
) -> Result<Vec<f32>> {
    let c = model.build_condition(class_id, subdomain_id, rng)?;
    let null = model.null_condition();
    let w = c.values.len();
    let cond = Array2::from_shape_vec((1, w), c.values).unwrap();
    let null = Array2::from_shape_vec((1, w), null.values).unwrap();
    let mut rngs = [rng.clone()];
    let out = sample_batch(model, &cond, Some(&null), cfg, &mut rngs)?;
    *rng = rngs[0].clone();
    Ok(out.into_raw_vec_and_offset().0)
}

/// Where an augmentation set came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub checkpoint_id: Option<String>,
    pub sampler: Option<SamplerConfig>,
    pub seed: u64,
}

/// Synthesized latents with `(class_id, subdomain_id)` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationSet {
    pub vectors: Array2<f32>,
    pub labels: Vec<(u32, u32)>,
    pub provenance: Provenance,
}

impl AugmentationSet {
    pub fn empty(dim: usize, provenance: Provenance) -> Self {
        Self {
            vectors: Array2::zeros((0, dim)),
            labels: Vec::new(),
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn count(&self, class_id: u32) -> usize {
        self.labels.iter().filter(|l| l.0 == class_id).count()
    }

    /// Read back a set written with [`AugmentationSet::write`]. The provenance
    /// is recovered from the source tag when it parses.
    pub fn from_dataset(ds: &LatentDataset) -> Self {
        let rows: Vec<&LatentRecord> = ds.records().iter().collect();
        let vectors = Array2::from_shape_fn((rows.len(), ds.dim()), |(i, j)| rows[i].vector[j]);
        let provenance = serde_json::from_str(&ds.manifest().source_tag).unwrap_or(Provenance {
            method: ds.manifest().source_tag.clone(),
            checkpoint_id: None,
            sampler: None,
            seed: 0,
        });
        Self {
            vectors,
            labels: rows.iter().map(|r| (r.class_id, r.subdomain_id)).collect(),
            provenance,
        }
    }

    /// As train-split records of a dataset shaped like `like`.
    pub fn to_dataset(&self, like: &DatasetManifest) -> Result<LatentDataset> {
        let mut manifest = DatasetManifest::new(self.dim(), like.c, like.k);
        manifest.class_names = like.class_names.clone();
        manifest.subdomain_names = like.subdomain_names.clone();
        manifest.source_tag = serde_json::to_string(&self.provenance)
            .map_err(|e| Error::Format(format!("provenance: {e}")))?;
        let records = self
            .vectors
            .rows()
            .into_iter()
            .zip(&self.labels)
            .map(|(v, &(c, k))| LatentRecord {
                vector: v.to_vec(),
                class_id: c,
                subdomain_id: k,
                split: Split::Train,
            })
            .collect();
        LatentDataset::new(manifest, records)
    }

    pub fn write(&self, like: &DatasetManifest, path: impl AsRef<Path>) -> Result<u64> {
        write_dataset(&self.to_dataset(like)?, path)
    }
}

const GENERATE_CHUNK: usize = 256;

/// `n_per_class` latents for every class in `classes`, all labeled with
/// `subdomain_id`. Sample `i` of class `c` uses stream `(seed, c, i)`, so a
/// sample does not depend on which other classes or chunks are generated.
pub fn generate_set(
    model: &DenoiserModel,
    classes: &[usize],
    subdomain_id: usize,
    n_per_class: usize,
    cfg: &SamplerConfig,
) -> Result<AugmentationSet> {
    cfg.validate()?;
    let provenance = Provenance {
        method: "diffusion".into(),
        checkpoint_id: Some(model.id()?),
        sampler: Some(*cfg),
        seed: cfg.seed,
    };
    let m = model.latent_dim();
    let w = model.cond_width();
    let null = model.null_condition();
    let sigmas = karras_sigmas(cfg.steps, &model.schedule, cfg.rho)?;
    let mut data = Vec::with_capacity(classes.len() * n_per_class * m);
    let mut labels = Vec::with_capacity(classes.len() * n_per_class);
    for &class in classes {
        let mut start = 0;
        while start < n_per_class {
            let end = (start + GENERATE_CHUNK).min(n_per_class);
            let mut rngs: Vec<StreamRng> = (start..end)
                .map(|i| rng::stream(cfg.seed, "generate", &[class as u64, i as u64]))
                .collect();
            let mut cond = Array2::zeros((end - start, w));
            for (mut row, r) in cond.rows_mut().into_iter().zip(rngs.iter_mut()) {
                let c = model.build_condition(class, subdomain_id, r)?;
                row.assign(&ndarray::ArrayView1::from(&c.values));
            }
            let nulls = Array2::from_shape_fn((end - start, w), |(_, j)| null.values[j]);
            let x = sample_with(
                model,
                &sigmas,
                &cond,
                Some(&nulls),
                cfg,
                &mut rngs,
                |_, _| {},
            )?;
            data.extend(x.iter().copied());
            labels.extend(std::iter::repeat_n(
                (class as u32, subdomain_id as u32),
                end - start,
            ));
            start = end;
        }
    }
    Ok(AugmentationSet {
        vectors: Array2::from_shape_vec((labels.len(), m), data).unwrap(),
        labels,
        provenance,
    })
}
