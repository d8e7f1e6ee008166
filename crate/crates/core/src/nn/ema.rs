use ndarray::{Array2, Zip};

use super::{ParamStore, Scalar};
use crate::error::{Error, Result};

/// Inverse decay: `min(max_decay, (1 + t) / (10 + t))`.
pub fn ema_decay(step: u64, max_decay: f64) -> f64 {
    let t = step as f64;
    ((1.0 + t) / (10.0 + t)).min(max_decay)
}

/// Shadow copy of parameters, updated as an exponential moving average.
#[derive(Debug, Clone)]
pub struct EmaState<F> {
    pub shadow: ParamStore<F>,
    pub step: u64,
    pub max_decay: f64,
}

impl<F: Scalar> EmaState<F> {
    pub fn new(params: &ParamStore<F>, max_decay: f64) -> Self {
        let mut shadow = params.clone();
        shadow.zero_grad();
        Self {
            shadow,
            step: 0,
            max_decay,
        }
    }

    pub fn decay(&self) -> f64 {
        ema_decay(self.step, self.max_decay)
    }

    /// `shadow <- d * shadow + (1 - d) * params`, written as a lerp so a
    /// shadow equal to the parameters stays bit-identical.
    pub fn update(&mut self, params: &ParamStore<F>) -> Result<()> {
        if params.len() != self.shadow.len() {
            return Err(Error::dims(
                "ema parameters",
                self.shadow.len(),
                params.len(),
            ));
        }
        let rate = F::lit(1.0 - self.decay());
        for (s, p) in self.shadow.iter_mut().zip(params.iter()) {
            if s.value.dim() != p.value.dim() {
                return Err(Error::dims(
                    format!("ema shape of `{}`", p.name),
                    s.value.len(),
                    p.value.len(),
                ));
            }
            Zip::from(&mut s.value).and(&p.value).for_each(|s, &p| {
                *s = *s + rate * (p - *s);
            });
        }
        self.step += 1;
        Ok(())
    }

    pub fn shadow_values(&self) -> impl Iterator<Item = &Array2<F>> {
        self.shadow.iter().map(|p| &p.value)
    }
}
