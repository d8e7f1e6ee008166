//! Randomized gradient checks over small adapter and denoiser instances.
//!
//! Every instance is drawn from its own stream, in 64-bit precision, with
//! zero-initialized parameters (biases, residual outputs, the null vector)
//! replaced by random values so each parameter sees a generic gradient.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::adapter::build_adapter;
use crate::condition::{CondInput, ConditionMode};
use crate::diffusion::{DenoiserConfig, DenoiserNet, DiffusionBatch, NoiseSchedule};
use crate::error::Result;
use crate::nn::{grad_check, softmax_cross_entropy, GradCheckReport, ParamStore};
use crate::rng::{self, StreamRng};

/// Central-difference step.
pub const STEP: f64 = 1e-5;

fn normal(r: &mut StreamRng) -> f64 {
    StandardNormal.sample(r)
}

/// Adapter with random depth, widths, frozen prefix and optional logit shift.
pub fn adapter_check(seed: u64, index: u64) -> Result<GradCheckReport> {
    let r = &mut rng::stream(seed, "gradcheck-adapter", &[index]);
    let m = r.random_range(2..=6);
    let c = r.random_range(2..=5);
    let hidden: Vec<usize> = (0..r.random_range(0..=2))
        .map(|_| r.random_range(2..=7))
        .collect();
    let mut model = build_adapter(m, c, &hidden, r.random())?.cast::<f64>();
    for p in model.params.iter_mut().filter(|p| p.name.ends_with("bias")) {
        p.value.mapv_inplace(|_| 0.1 * normal(r));
    }
    let l = r.random_range(0..model.num_layers());
    model.freeze_prefix(l)?;
    let n = r.random_range(2..=8);
    let x = Array2::from_shape_simple_fn((n, model.dims()[l]), || normal(r));
    let y: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
    let shift: Option<Vec<f64>> = r
        .random_bool(0.5)
        .then(|| (0..c).map(|_| normal(r)).collect());
    let mut params = std::mem::take(&mut model.params);
    grad_check(
        &mut params,
        |p, need_grad| {
            // the model evaluates with the store under test swapped in
            std::mem::swap(&mut model.params, p);
            let out = (|| {
                let (logits, tapes) = model.forward_from(l, &x)?;
                let (loss, d) = softmax_cross_entropy(&logits, &y, shift.as_deref())?;
                if need_grad {
                    model.backward_from(l, &tapes, d);
                }
                Ok(loss)
            })();
            std::mem::swap(&mut model.params, p);
            out
        },
        STEP,
    )
}

/// Denoiser with a random condition mode, shape, dropout masks and a batch
/// mixing dropped and kept conditions.
pub fn denoiser_check(seed: u64, index: u64) -> Result<GradCheckReport> {
    let r = &mut rng::stream(seed, "gradcheck-denoiser", &[index]);
    let mode = [
        ConditionMode::ClassOnly,
        ConditionMode::ClassPlusSubdomainLatent,
        ConditionMode::ClassPlusSemanticVector,
    ][r.random_range(0..3)];
    let m = r.random_range(2..=5);
    let c = r.random_range(2..=4);
    let extra = match mode {
        ConditionMode::ClassOnly => 0,
        ConditionMode::ClassPlusSubdomainLatent => m,
        ConditionMode::ClassPlusSemanticVector => r.random_range(1..=4),
    };
    let config = DenoiserConfig {
        width: r.random_range(3..=6),
        depth: r.random_range(1..=3),
        cond_width: r.random_range(2..=5),
        embed_width: r.random_range(2..=4),
        time_dim: 2 * r.random_range(1..=2),
        dropout: if r.random_bool(0.5) { 0.3 } else { 0.0 },
    };
    let mut params = ParamStore::<f64>::new();
    let net = DenoiserNet::new(&mut params, m, c, mode, extra, config, r.random())?;
    for p in params.iter_mut() {
        if p.value.iter().all(|&v| v == 0.0) {
            p.value.mapv_inplace(|_| 0.3 * normal(r));
        }
    }
    let schedule = NoiseSchedule::new(0.01, 80.0, r.random_range(0.5..2.0))?;
    let b = r.random_range(2..=6);
    let keep = 1.0 - config.dropout;
    let batch = DiffusionBatch {
        x0: Array2::from_shape_simple_fn((b, m), || normal(r)),
        noise: Array2::from_shape_simple_fn((b, m), || normal(r)),
        sigmas: (0..b)
            .map(|_| r.random_range(0.01f64.ln()..80f64.ln()).exp())
            .collect(),
        cond: (0..b)
            .map(|_| CondInput {
                class_id: r.random_range(0..c),
                extra: (0..extra).map(|_| normal(r) as f32).collect(),
            })
            .collect(),
        dropped: (0..b).map(|_| r.random_bool(0.3)).collect(),
        masks: if config.dropout > 0.0 {
            (0..config.depth)
                .map(|_| {
                    Array2::from_shape_simple_fn((b, config.width), || {
                        if r.random_bool(keep) {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                })
                .collect()
        } else {
            Vec::new()
        },
    };
    grad_check(&mut params, |p, g| net.loss(p, &schedule, &batch, g), STEP)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub adapter_instances: usize,
    pub denoiser_instances: usize,
    pub adapter_max_rel_error: f64,
    pub denoiser_max_rel_error: f64,
    pub parameters_checked: usize,
}

impl SuiteReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.adapter_max_rel_error < tolerance && self.denoiser_max_rel_error < tolerance
    }
}

/// `n` instances alternating adapter and denoiser.
pub fn gradient_suite(n: usize, seed: u64) -> Result<SuiteReport> {
    let mut out = SuiteReport {
        adapter_instances: 0,
        denoiser_instances: 0,
        adapter_max_rel_error: 0.0,
        denoiser_max_rel_error: 0.0,
        parameters_checked: 0,
    };
    for i in 0..n as u64 {
        if i % 2 == 0 {
            let r = adapter_check(seed, i)?;
            out.adapter_instances += 1;
            out.adapter_max_rel_error = out.adapter_max_rel_error.max(r.max_rel_error);
            out.parameters_checked += r.checked;
        } else {
            let r = denoiser_check(seed, i)?;
            out.denoiser_instances += 1;
            out.denoiser_max_rel_error = out.denoiser_max_rel_error.max(r.max_rel_error);
            out.parameters_checked += r.checked;
        }
    }
    Ok(out)
}
