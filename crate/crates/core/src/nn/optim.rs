use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{ParamStore, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
    AdamW,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub momentum: f64,
    /// L2 penalty for `sgd_momentum`/`adam`, decoupled decay for `adam_w`.
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            momentum: 0.9,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        Self {
            lr,
            ..Default::default()
        }
    }

    pub fn adamw(lr: f64, weight_decay: f64) -> Self {
        Self {
            kind: OptimizerKind::AdamW,
            lr,
            weight_decay,
            ..Default::default()
        }
    }

    pub fn sgd(lr: f64, momentum: f64) -> Self {
        Self {
            kind: OptimizerKind::SgdMomentum,
            lr,
            momentum,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState<F> {
    pub config: OptimizerConfig,
    /// Learning rate for the next step; schedules overwrite this.
    pub lr: f64,
    pub step: u64,
    first: Vec<Array2<F>>,
    second: Vec<Array2<F>>,
}

impl<F: Scalar> OptimizerState<F> {
    pub fn new(config: OptimizerConfig, params: &ParamStore<F>) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| Array2::zeros(p.value.raw_dim()))
                .collect()
        };
        let second = match config.kind {
            OptimizerKind::SgdMomentum => Vec::new(),
            _ => zeros(),
        };
        Self {
            lr: config.lr,
            config,
            step: 0,
            first: zeros(),
            second,
        }
    }

    /// Apply one update to every non-frozen parameter. Gradients are left
    /// in place for the caller to clear.
    pub fn step(&mut self, params: &mut ParamStore<F>) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::dims(
                "optimizer state",
                self.first.len(),
                params.len(),
            ));
        }
        for p in params.iter() {
            if !p.frozen && p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient in `{}`",
                    p.name
                )));
            }
        }
        self.step += 1;
        let c = &self.config;
        let lr = F::lit(self.lr);
        let wd = F::lit(c.weight_decay);
        match c.kind {
            OptimizerKind::SgdMomentum => {
                let mu = F::lit(c.momentum);
                for (p, buf) in params.iter_mut().zip(&mut self.first) {
                    if p.frozen {
                        continue;
                    }
                    Zip::from(&mut p.value)
                        .and(&p.grad)
                        .and(buf)
                        .for_each(|w, &g, b| {
                            let g = if c.weight_decay != 0.0 {
                                g + wd * *w
                            } else {
                                g
                            };
                            *b = mu * *b + g;
                            *w -= lr * *b;
                        });
                }
            }
            OptimizerKind::Adam | OptimizerKind::AdamW => {
                let decoupled = c.kind == OptimizerKind::AdamW;
                let b1 = F::lit(c.beta1);
                let b2 = F::lit(c.beta2);
                let eps = F::lit(c.eps);
                let bc1 = F::one() - F::lit(c.beta1.powi(self.step as i32));
                let bc2 = F::one() - F::lit(c.beta2.powi(self.step as i32));
                for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
                    if p.frozen {
                        continue;
                    }
                    Zip::from(&mut p.value)
                        .and(&p.grad)
                        .and(m)
                        .and(v)
                        .for_each(|w, &g, m, v| {
                            let mut g = g;
                            if c.weight_decay != 0.0 {
                                if decoupled {
                                    *w = *w - lr * wd * *w;
                                } else {
                                    g += wd * *w;
                                }
                            }
                            *m = b1 * *m + (F::one() - b1) * g;
                            *v = b2 * *v + (F::one() - b2) * g * g;
                            let m_hat = *m / bc1;
                            let v_hat = *v / bc2;
                            *w -= lr * m_hat / (v_hat.sqrt() + eps);
                        });
                }
            }
        }
        Ok(())
    }
}
