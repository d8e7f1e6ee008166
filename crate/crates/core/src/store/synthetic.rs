//! Synthetic latent datasets with known per-cell Gaussians.
//!
//! Cell `(c, k)` is drawn from `N(class_offsets[c] + subdomain_offsets[k],
//! per_cell_std^2 I)`. Shared class offsets across subdomains give the
//! "same labels, shifted domain" geometry that makes cross-subdomain
//! transfer measurable.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, LatentDataset, LatentRecord, Split};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub m: usize,
    pub c: usize,
    pub k: usize,
    pub class_offsets: Vec<Vec<f32>>,
    pub subdomain_offsets: Vec<Vec<f32>>,
    pub per_cell_std: f32,
    /// `n_train[class][subdomain]`
    pub n_train: Vec<Vec<usize>>,
    /// `n_test[class][subdomain]`
    pub n_test: Vec<Vec<usize>>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.m == 0 || self.c == 0 || self.k == 0 {
            return bad("m, c and k must be positive".into());
        }
        if !(self.per_cell_std > 0.0) || !self.per_cell_std.is_finite() {
            return bad(format!(
                "per_cell_std {} must be positive",
                self.per_cell_std
            ));
        }
        if self.class_offsets.len() != self.c || self.subdomain_offsets.len() != self.k {
            return bad("one offset vector per class and per subdomain required".into());
        }
        for o in self.class_offsets.iter().chain(&self.subdomain_offsets) {
            if o.len() != self.m {
                return Err(Error::dims("synthetic offset", self.m, o.len()));
            }
        }
        for counts in [&self.n_train, &self.n_test] {
            if counts.len() != self.c || counts.iter().any(|row| row.len() != self.k) {
                return bad("cell counts must be a c x k table".into());
            }
        }
        Ok(())
    }

    /// Mean of cell `(class, subdomain)`.
    pub fn cell_mean(&self, class: usize, subdomain: usize) -> Vec<f32> {
        self.class_offsets[class]
            .iter()
            .zip(&self.subdomain_offsets[subdomain])
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// Compact description of the transfer family used for desk-scale
/// experiments: class offsets form a regular simplex with the given
/// pairwise distance along the first `c` axes. Subdomain `k` has the given
/// norm and mixes a private axis (after the first `c`) with the direction
/// from the simplex centroid toward a class vertex: `alignment[k]` is the
/// sine of the angle to the private axis. At 0 the shift is invisible to a
/// class boundary; larger values make unseen (class, subdomain) cells drift
/// toward that class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFamily {
    pub m: usize,
    pub c: usize,
    pub k: usize,
    pub class_distance: f32,
    pub subdomain_norm: f32,
    pub per_cell_std: f32,
    /// Per subdomain; empty means every shift stays on its private axis.
    #[serde(default)]
    pub alignment: Vec<f32>,
    /// Class vertex each subdomain drifts toward; empty means `k mod c`.
    #[serde(default)]
    pub drift_toward: Vec<usize>,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for TransferFamily {
    fn default() -> Self {
        Self {
            m: 16,
            c: 4,
            k: 3,
            class_distance: 6.0,
            subdomain_norm: 3.0,
            per_cell_std: 1.0,
            alignment: Vec::new(),
            drift_toward: Vec::new(),
            n_train: 200,
            n_test: 100,
            seed: 0,
        }
    }
}

impl TransferFamily {
    pub fn spec(&self) -> Result<SyntheticSpec> {
        if self.c + self.k > self.m {
            return Err(Error::InvalidConfig(format!(
                "transfer family needs m >= c + k ({} < {})",
                self.m,
                self.c + self.k
            )));
        }
        if !self.alignment.is_empty() && self.alignment.len() != self.k {
            return Err(Error::InvalidConfig(
                "alignment needs one value per subdomain".into(),
            ));
        }
        if let Some(bad) = self.alignment.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::InvalidConfig(format!(
                "alignment {bad} must lie in [0, 1]"
            )));
        }
        if !self.drift_toward.is_empty() && self.drift_toward.len() != self.k {
            return Err(Error::InvalidConfig(
                "drift_toward needs one class per subdomain".into(),
            ));
        }
        if let Some(&bad) = self.drift_toward.iter().find(|&&c| c >= self.c) {
            return Err(Error::InvalidConfig(format!(
                "drift_toward class {bad} >= c={}",
                self.c
            )));
        }
        let axis = |i: usize, scale: f32| {
            let mut v = vec![0f32; self.m];
            v[i] = scale;
            v
        };
        let a = self.class_distance / std::f32::consts::SQRT_2;
        Ok(SyntheticSpec {
            m: self.m,
            c: self.c,
            k: self.k,
            class_offsets: (0..self.c).map(|i| axis(i, a)).collect(),
            subdomain_offsets: (0..self.k).map(|i| self.subdomain_offset(i)).collect(),
            per_cell_std: self.per_cell_std,
            n_train: vec![vec![self.n_train; self.k]; self.c],
            n_test: vec![vec![self.n_test; self.k]; self.c],
            seed: self.seed,
        })
    }

    fn subdomain_offset(&self, k: usize) -> Vec<f32> {
        let s = self.alignment.get(k).copied().unwrap_or(0.0);
        let mut v = vec![0f32; self.m];
        v[self.c + k] = self.subdomain_norm * (1.0 - s * s).sqrt();
        // unit vector from the centroid of the simplex toward vertex k mod c
        let target = self.drift_toward.get(k).copied().unwrap_or(k % self.c);
        let cf = self.c as f32;
        let norm = ((cf - 1.0) / cf).sqrt();
        if norm > 0.0 {
            for (i, x) in v.iter_mut().take(self.c).enumerate() {
                let d = if i == target {
                    1.0 - 1.0 / cf
                } else {
                    -1.0 / cf
                };
                *x = self.subdomain_norm * s * d / norm;
            }
        }
        v
    }
}

/// Draw a dataset from `spec`. Each `(class, subdomain, split)` cell has
/// its own random stream.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<LatentDataset> {
    spec.validate()?;
    if spec.n_train.iter().flatten().all(|&n| n == 0) {
        return Err(Error::EmptyDataset("every cell has n_train = 0".into()));
    }
    let mut records = Vec::new();
    for split in [Split::Train, Split::Test] {
        let counts = match split {
            Split::Train => &spec.n_train,
            Split::Test => &spec.n_test,
        };
        for c in 0..spec.c {
            for k in 0..spec.k {
                let mean = spec.cell_mean(c, k);
                let mut r = rng::stream(
                    spec.seed,
                    "synthetic-cell",
                    &[c as u64, k as u64, split.index() as u64],
                );
                for _ in 0..counts[c][k] {
                    let vector = mean
                        .iter()
                        .map(|&mu| {
                            let z: f32 = StandardNormal.sample(&mut r);
                            mu + spec.per_cell_std * z
                        })
                        .collect();
                    records.push(LatentRecord {
                        vector,
                        class_id: c as u32,
                        subdomain_id: k as u32,
                        split,
                    });
                }
            }
        }
    }
    let mut manifest = DatasetManifest::new(spec.m, spec.c, spec.k);
    manifest.source_tag = format!("synthetic:seed={}", spec.seed);
    LatentDataset::new(manifest, records)
}
