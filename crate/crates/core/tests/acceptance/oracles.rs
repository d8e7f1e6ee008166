//! Criteria with closed-form or brute-force oracles.

use std::time::Instant;

use gelda::condition::ConditionMode;
use gelda::diagnostics;
use gelda::diffusion::{
    train_diffusion, ConditionSetup, DenoiserConfig, DenoiserModel, DiffTrainConfig, NoiseSchedule,
};
use gelda::metrics::compute_metrics;
use gelda::rng::{self, StreamRng};
use gelda::sampler::{
    cfg_combine, generate_set, karras_sigmas, sample_with, Denoise, Integrator, SamplerConfig,
};
use gelda::store::{DatasetManifest, LatentDataset, LatentRecord, Split};
use gelda::Result;
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{common, Check};

/// Gaussian-oracle model, trained once and shared by several criteria.
#[derive(Default)]
pub struct Shared {
    gaussian: Option<(DenoiserModel, Vec<Vec<f32>>, f64)>,
}

/// Hyperparameters for the two diffusion oracles.
fn oracle_train(iterations: u64, seed: u64) -> DiffTrainConfig {
    DiffTrainConfig {
        iterations,
        batch_size: 128,
        lr: 1e-3,
        seed,
        ..Default::default()
    }
}

fn normal(r: &mut StreamRng) -> f64 {
    StandardNormal.sample(r)
}

pub fn gradient_suite(_: &mut Shared) -> Check {
    let start = Instant::now();
    let report = match diagnostics::gradient_suite(100, 100) {
        Ok(r) => r,
        Err(e) => return Check::new(false, e.to_string()),
    };
    let secs = start.elapsed().as_secs_f64();
    Check::new(
        report.passes(1e-4) && secs < 60.0,
        format!(
            "{} adapter + {} denoiser instances ({} parameters), max rel error {:.2e} / {:.2e} (< 1e-4), {secs:.1}s (< 60s)",
            report.adapter_instances,
            report.denoiser_instances,
            report.parameters_checked,
            report.adapter_max_rel_error,
            report.denoiser_max_rel_error
        ),
    )
}

fn class_dataset(
    m: usize,
    rows: impl IntoIterator<Item = (u32, Vec<f32>)>,
    c: usize,
) -> LatentDataset {
    let records = rows
        .into_iter()
        .map(|(class_id, vector)| LatentRecord {
            vector,
            class_id,
            subdomain_id: 0,
            split: Split::Train,
        })
        .collect();
    LatentDataset::new(DatasetManifest::new(m, c, 1), records).unwrap()
}

fn max_abs_dev(set: &Array2<f32>, v: &[f32]) -> f64 {
    set.rows()
        .into_iter()
        .flat_map(|row| {
            row.iter()
                .zip(v)
                .map(|(a, b)| (a - b).abs() as f64)
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

pub fn point_mass(_: &mut Shared) -> Check {
    let start = Instant::now();
    let mut r = rng::stream(200, "point-mass", &[]);
    let v: Vec<f32> = (0..16).map(|_| 1.5 * normal(&mut r) as f32).collect();
    let ds = class_dataset(16, (0..64).map(|_| (0, v.clone())), 1);
    let setup = ConditionSetup {
        mode: ConditionMode::ClassOnly,
        semantic: None,
    };
    let model_cfg = DenoiserConfig::preset("small").unwrap();
    let (model, stats) = match train_diffusion(&ds, &setup, &model_cfg, &oracle_train(5_000, 201)) {
        Ok(out) => out,
        Err(e) => return Check::new(false, e.to_string()),
    };
    let cfg = SamplerConfig {
        seed: 202,
        ..Default::default()
    };
    let set = match generate_set(&model, &[0], 0, 100, &cfg) {
        Ok(s) => s,
        Err(e) => return Check::new(false, e.to_string()),
    };
    let ratio = max_abs_dev(&set.vectors, &v) / stats.sigma_data;
    let secs = start.elapsed().as_secs_f64();
    Check::new(
        ratio <= 0.05 && secs < 180.0,
        format!(
            "M=16, 5000 iterations, 100 EMA samples ({:?}, cfg {}): max |x - v| = {ratio:.4} sigma_data (<= 0.05), {secs:.1}s (< 180s)",
            cfg.integrator, cfg.cfg_scale
        ),
    )
}

const GAUSS_C: usize = 3;
const GAUSS_M: usize = 8;
const GAUSS_STD: f64 = 1.0;

/// Train the conditional Gaussian oracle: class `c` is `N(mu_c, I)`.
fn gaussian_model(shared: &mut Shared) -> Result<&(DenoiserModel, Vec<Vec<f32>>, f64)> {
    if shared.gaussian.is_none() {
        let start = Instant::now();
        let mut r = rng::stream(300, "gaussian-oracle", &[]);
        let means: Vec<Vec<f32>> = (0..GAUSS_C)
            .map(|_| (0..GAUSS_M).map(|_| 2.0 * normal(&mut r) as f32).collect())
            .collect();
        let rows: Vec<(u32, Vec<f32>)> = (0..GAUSS_C * 2000)
            .map(|i| {
                let c = i % GAUSS_C;
                let x = means[c]
                    .iter()
                    .map(|&mu| mu + (GAUSS_STD * normal(&mut r)) as f32)
                    .collect();
                (c as u32, x)
            })
            .collect();
        let ds = class_dataset(GAUSS_M, rows, GAUSS_C);
        let setup = ConditionSetup {
            mode: ConditionMode::ClassOnly,
            semantic: None,
        };
        // the class spread is the data scale the Bayes denoiser is written in
        // high-noise outputs get little loss weight; a larger batch at a lower
        // rate pins down the class means the Bayes probe checks there
        let cfg = DiffTrainConfig {
            sigma_data: Some(GAUSS_STD),
            batch_size: 256,
            lr: 5e-4,
            ..oracle_train(20_000, 301)
        };
        let (model, _) = train_diffusion(&ds, &setup, &DenoiserConfig::preset("small")?, &cfg)?;
        shared.gaussian = Some((model, means, start.elapsed().as_secs_f64()));
    }
    Ok(shared.gaussian.as_ref().unwrap())
}

pub fn gaussian_conditional(shared: &mut Shared) -> Check {
    let start = Instant::now();
    let (model, means, train_secs) = match gaussian_model(shared) {
        Ok(g) => g,
        Err(e) => return Check::new(false, e.to_string()),
    };
    let cfg = SamplerConfig {
        integrator: Integrator::DpmppSde,
        cfg_scale: 1.0,
        seed: 302,
        ..Default::default()
    };
    let classes: Vec<usize> = (0..GAUSS_C).collect();
    let set = match generate_set(model, &classes, 0, 2000, &cfg) {
        Ok(s) => s,
        Err(e) => return Check::new(false, e.to_string()),
    };
    let (mut mean_err, mut var_err) = (0f64, 0f64);
    for (c, mu) in means.iter().enumerate() {
        let rows: Vec<_> = set
            .vectors
            .rows()
            .into_iter()
            .zip(&set.labels)
            .filter(|(_, l)| l.0 as usize == c)
            .map(|(r, _)| r.to_vec())
            .collect();
        let n = rows.len() as f64;
        for j in 0..GAUSS_M {
            let mean = rows.iter().map(|r| r[j] as f64).sum::<f64>() / n;
            let var = rows
                .iter()
                .map(|r| (r[j] as f64 - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            mean_err = mean_err.max((mean - mu[j] as f64).abs());
            var_err = var_err.max((var / (GAUSS_STD * GAUSS_STD) - 1.0).abs());
        }
    }
    let secs = *train_secs + start.elapsed().as_secs_f64();
    Check::new(
        mean_err <= 0.1 && var_err <= 0.2 && secs < 600.0,
        format!(
            "C=3, M=8, 20000 iterations, 2000 samples/class (dpmpp_sde, cfg 1): max mean error {mean_err:.4} (<= 0.1), \
             max variance deviation {:.1}% (<= 20%), {secs:.1}s (< 600s)",
            100.0 * var_err
        ),
    )
}

pub fn bayes_probe(shared: &mut Shared) -> Check {
    let (model, means, _) = match gaussian_model(shared) {
        Ok(g) => g,
        Err(e) => return Check::new(false, e.to_string()),
    };
    let sd = model.schedule.sigma_data;
    let mut r = rng::stream(310, "bayes-probe", &[]);
    let mut worst = 0f64;
    for i in 0..50 {
        let c = i % GAUSS_C;
        let sigma = r.random_range(0.02f64.ln()..20f64.ln()).exp();
        let spread = (GAUSS_STD * GAUSS_STD + sigma * sigma).sqrt();
        let x: Vec<f32> = means[c]
            .iter()
            .map(|&mu| (mu as f64 + spread * normal(&mut r)) as f32)
            .collect();
        let cond = match model.build_condition(c, 0, &mut r) {
            Ok(cond) => cond,
            Err(e) => return Check::new(false, e.to_string()),
        };
        let d = match model.precondition_denoise(&x, sigma, &cond) {
            Ok(d) => d,
            Err(e) => return Check::new(false, e.to_string()),
        };
        for j in 0..GAUSS_M {
            let exact = (sd * sd * x[j] as f64 + sigma * sigma * means[c][j] as f64)
                / (sigma * sigma + sd * sd);
            worst = worst.max((d[j] as f64 - exact).abs());
        }
    }
    Check::new(
        worst <= 0.1 * sd,
        format!(
            "50 probes, sigma in [0.02, 20]: max |D - D*| = {:.4} sigma_data (<= 0.1)",
            worst / sd
        ),
    )
}

fn cond_rows(
    model: &DenoiserModel,
    classes: &[usize],
    seed: u64,
) -> Result<(Array2<f32>, Array2<f32>)> {
    let w = model.cond_width();
    let mut cond = Array2::zeros((classes.len(), w));
    let null = model.null_condition();
    for (i, &c) in classes.iter().enumerate() {
        let v = model.build_condition(c, 0, &mut rng::stream(seed, "cfg-cond", &[i as u64]))?;
        cond.row_mut(i)
            .assign(&ndarray::ArrayView1::from(&v.values));
    }
    let nulls = Array2::from_shape_fn((classes.len(), w), |(_, j)| null.values[j]);
    Ok((cond, nulls))
}

fn streams(n: usize, seed: u64) -> Vec<StreamRng> {
    (0..n)
        .map(|i| rng::stream(seed, "cfg-noise", &[i as u64]))
        .collect()
}

fn cfg_checks(model: &DenoiserModel) -> Result<(bool, bool, f64)> {
    let classes = [0, 1, 2, 0, 1, 2];
    let (cond, nulls) = cond_rows(model, &classes, 320)?;
    let sigmas = karras_sigmas(20, &model.schedule, 7.0)?;
    let mut one = true;
    let mut zero = true;
    for integrator in [
        Integrator::Euler,
        Integrator::EulerAncestral,
        Integrator::DpmppSde,
    ] {
        let at = |scale: f64| SamplerConfig {
            integrator,
            cfg_scale: scale,
            ..Default::default()
        };
        let guided = sample_with(
            model,
            &sigmas,
            &cond,
            Some(&nulls),
            &at(1.0),
            &mut streams(6, 321),
            |_, _| {},
        )?;
        let plain = sample_with(
            model,
            &sigmas,
            &cond,
            None,
            &at(1.0),
            &mut streams(6, 321),
            |_, _| {},
        )?;
        one &= guided
            .iter()
            .zip(&plain)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        let guided = sample_with(
            model,
            &sigmas,
            &cond,
            Some(&nulls),
            &at(0.0),
            &mut streams(6, 322),
            |_, _| {},
        )?;
        let uncond = sample_with(
            model,
            &sigmas,
            &nulls,
            None,
            &at(1.0),
            &mut streams(6, 322),
            |_, _| {},
        )?;
        zero &= guided
            .iter()
            .zip(&uncond)
            .all(|(a, b)| a.to_bits() == b.to_bits());
    }
    // affine in the scale on random vectors
    let mut r = rng::stream(323, "cfg-affine", &[]);
    let mut worst = 0f64;
    for _ in 0..1000 {
        let n = r.random_range(1..=32);
        let dc: Vec<f32> = (0..n).map(|_| normal(&mut r) as f32).collect();
        let du: Vec<f32> = (0..n).map(|_| normal(&mut r) as f32).collect();
        let (s1, s2, a) = (
            r.random_range(0.0..4.0),
            r.random_range(0.0..4.0),
            r.random_range(0.0..1.0),
        );
        let mixed = cfg_combine(&dc, &du, a * s1 + (1.0 - a) * s2)?;
        let g1 = cfg_combine(&dc, &du, s1)?;
        let g2 = cfg_combine(&dc, &du, s2)?;
        for j in 0..n {
            let lin = a * g1[j] as f64 + (1.0 - a) * g2[j] as f64;
            worst = worst.max((mixed[j] as f64 - lin).abs() / lin.abs().max(1.0));
        }
    }
    Ok((one, zero, worst))
}

pub fn cfg_identities(shared: &mut Shared) -> Check {
    let model = match gaussian_model(shared) {
        Ok(g) => &g.0,
        Err(e) => return Check::new(false, e.to_string()),
    };
    match cfg_checks(model) {
        Ok((one, zero, worst)) => Check::new(
            one && zero && worst <= 1e-6,
            format!(
                "trained oracle, 3 integrators: scale 1 bit-equal to conditioned-only: {one}; scale 0 bit-equal to \
                 unconditioned: {zero}; affine in scale on 1000 random pairs, max rel error {worst:.1e} (<= 1e-6)"
            ),
        ),
        Err(e) => Check::new(false, e.to_string()),
    }
}

/// Ignores its input and returns a fixed vector.
struct Constant(Vec<f32>, NoiseSchedule);

impl Denoise for Constant {
    fn latent_dim(&self) -> usize {
        self.0.len()
    }
    fn schedule(&self) -> NoiseSchedule {
        self.1
    }
    fn denoise(&self, x: &Array2<f32>, _: f64, _: &Array2<f32>) -> Result<Array2<f32>> {
        Ok(Array2::from_shape_fn(x.dim(), |(_, j)| self.0[j]))
    }
}

fn closed_forms() -> Result<(f64, bool)> {
    let mut worst = 0f64;
    let mut endpoints = true;
    let mut r = rng::stream(330, "closed-forms", &[]);
    for case in 0..20u64 {
        let schedule =
            NoiseSchedule::new(r.random_range(0.001..0.1), r.random_range(1.0..100.0), 1.0)?;
        let steps = r.random_range(1..=50);
        let rho = r.random_range(1.0..10.0);
        let sigmas = karras_sigmas(steps, &schedule, rho)?;
        endpoints &= sigmas.len() == steps + 1
            && sigmas[0] == schedule.sigma_max
            && sigmas[steps - 1] == schedule.sigma_min
            && sigmas[steps] == 0.0;
        let m = r.random_range(1..=8);
        let v: Vec<f32> = (0..m).map(|_| 3.0 * normal(&mut r) as f32).collect();
        let model = Constant(v.clone(), schedule);
        let cfg = SamplerConfig {
            integrator: Integrator::Euler,
            steps,
            rho,
            ..Default::default()
        };
        let mut x0 = None;
        let mut streams = vec![rng::stream(331, "closed-forms", &[case])];
        let cond = Array2::zeros((1, 1));
        sample_with(&model, &sigmas, &cond, None, &cfg, &mut streams, |i, x| {
            let x = x.row(0).to_vec();
            let start = x0.get_or_insert_with(|| x.clone()).clone();
            // relative to the size of the exact state vector
            let (mut err, mut size) = (0f64, 0f64);
            for j in 0..m {
                let exact = v[j] as f64 + (start[j] as f64 - v[j] as f64) * sigmas[i] / sigmas[0];
                err = err.max((x[j] as f64 - exact).abs());
                size = size.max(exact.abs());
            }
            worst = worst.max(err / size);
        })?;
    }
    Ok((worst, endpoints))
}

pub fn sampler_closed_forms(_: &mut Shared) -> Check {
    match closed_forms() {
        Ok((worst, endpoints)) => Check::new(
            worst <= 1e-5 && endpoints,
            format!(
                "20 random grids: constant-denoiser Euler trajectory max rel error (inf-norm) {worst:.1e} (<= 1e-5); \
                 Karras endpoints exact: {endpoints}"
            ),
        ),
        Err(e) => Check::new(false, e.to_string()),
    }
}

pub fn metrics_oracle(_: &mut Shared) -> Check {
    let mut r = rng::stream(340, "metrics-oracle", &[]);
    let mut worst = 0f64;
    for i in 0..1000 {
        let c = r.random_range(1..=10);
        let n = r.random_range(1..=200);
        let pred: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
        let train: Vec<u64> = (0..c).map(|_| r.random_range(0..200)).collect();
        let report = match compute_metrics(&pred, &labels, c, Some(&train), None) {
            Ok(rep) => rep,
            Err(e) => return Check::new(false, format!("instance {i}: {e}")),
        };
        match common::metrics_gap(&report, &common::brute_metrics(&pred, &labels, c, &train)) {
            Some(gap) => worst = worst.max(gap),
            None => return Check::new(false, format!("instance {i}: class presence differs")),
        }
    }
    // confusion [[1, 1], [0, 2]]
    let hand = compute_metrics(&[0, 1, 1, 1], &[0, 0, 1, 1], 2, None, None).unwrap();
    let round2 = |v: f64| (v * 100.0).round() / 100.0;
    let hand_ok = hand.confusion == vec![vec![1, 1], vec![0, 2]]
        && round2(hand.ua) == 75.0
        && round2(hand.wa) == 75.0
        && round2(hand.macro_f1) == 73.33;
    Check::new(
        worst <= 1e-9 && hand_ok,
        format!(
            "1000 random instances, max gap to brute force {worst:.1e} (<= 1e-9); [[1,1],[0,2]] gives UA {:.2} / WA {:.2} / Macro-F1 {:.2}",
            hand.ua, hand.wa, hand.macro_f1
        ),
    )
}

pub fn format_fuzzing(_: &mut Shared) -> Check {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng::stream(350, "format-fuzzing", &[]);
    for i in 0..1000 {
        let ds = common::random_dataset(&mut r, 0);
        if let Err(e) = common::round_trip(&ds, dir.path(), &format!("rt{}", i % 10)) {
            return Check::new(false, format!("round trip {i}: {e}"));
        }
    }
    for i in 0..100 {
        let ds = common::random_dataset(&mut r, 1);
        let path = dir.path().join(format!("bad{i}.geld"));
        let integrity = common::corrupt(&ds, &path, i % common::CORRUPTIONS, &mut r);
        if let Err(e) = common::check_rejected(&path, integrity) {
            return Check::new(
                false,
                format!("corruption {i} (kind {}): {e}", i % common::CORRUPTIONS),
            );
        }
    }
    Check::new(
        true,
        format!("1000 random round trips bit-exact; 100 corrupted files over {} kinds rejected with typed errors", common::CORRUPTIONS),
    )
}
