use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Noise range and data scale of a denoiser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_data: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            sigma_min: 0.01,
            sigma_max: 80.0,
            sigma_data: 1.0,
        }
    }
}

impl NoiseSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64, sigma_data: f64) -> Result<Self> {
        let s = Self {
            sigma_min,
            sigma_max,
            sigma_data,
        };
        s.validate()?;
        Ok(s)
    }

    /// `sigma_min == sigma_max` is accepted as a degenerate point range.
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.sigma_min) || !ok(self.sigma_max) || self.sigma_min > self.sigma_max {
            return Err(Error::InvalidConfig(format!(
                "sigma range [{}, {}] must satisfy 0 < min <= max",
                self.sigma_min, self.sigma_max
            )));
        }
        if !ok(self.sigma_data) {
            return Err(Error::InvalidConfig(format!(
                "sigma_data {} must be positive",
                self.sigma_data
            )));
        }
        Ok(())
    }

    pub fn c_skip(&self, sigma: f64) -> f64 {
        let sd2 = self.sigma_data * self.sigma_data;
        sd2 / (sigma * sigma + sd2)
    }

    pub fn c_out(&self, sigma: f64) -> f64 {
        sigma * self.sigma_data / (sigma * sigma + self.sigma_data * self.sigma_data).sqrt()
    }

    pub fn c_in(&self, sigma: f64) -> f64 {
        1.0 / (sigma * sigma + self.sigma_data * self.sigma_data).sqrt()
    }

    /// Soft-min-SNR weight on the denoised-space error.
    pub fn loss_weight(&self, sigma: f64) -> f64 {
        1.0 / (sigma * sigma + self.sigma_data * self.sigma_data)
    }

    /// Inverse CDF of the cosine-interpolated noise distribution.
    pub fn sigma_from_uniform(&self, u: f64) -> f64 {
        let sd = self.sigma_data;
        let lo = (self.sigma_min / sd).atan();
        let hi = (self.sigma_max / sd).atan();
        (sd * (u * (hi - lo) + lo).tan()).clamp(self.sigma_min, self.sigma_max)
    }

    pub fn sample_sigma<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sigma_from_uniform(rng.random())
    }
}

/// Pooled standard deviation of every entry of `rows`.
pub fn estimate_sigma_data<'a>(rows: impl IntoIterator<Item = &'a [f32]>) -> Result<f64> {
    let (mut n, mut sum, mut sum2) = (0u64, 0.0f64, 0.0f64);
    for r in rows {
        for &v in r {
            n += 1;
            sum += v as f64;
            sum2 += v as f64 * v as f64;
        }
    }
    if n == 0 {
        return Err(Error::EmptyDataset("no training latents".into()));
    }
    let mean = sum / n as f64;
    Ok((sum2 / n as f64 - mean * mean).max(0.0).sqrt())
}
