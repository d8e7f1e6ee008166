//! End-to-end criteria on the synthetic transfer family.

use std::path::Path;
use std::time::Instant;

use gelda::adapter::TrainConfig;
use gelda::condition::ConditionMode;
use gelda::diffusion::{BatchSampling, DenoiserConfig, DiffTrainConfig};
use gelda::nn::read_checkpoint;
use gelda::pipeline::{latent_fill_augment, run_gelda, DataSource, PipelineConfig, RunReport};
use gelda::rng;
use gelda::sampler::SamplerConfig;
use gelda::store::{
    apply_scenario, make_synthetic, read_dataset, write_dataset, LatentDataset, LatentRecord,
    ScenarioKind, ScenarioSpec, Split, TransferFamily,
};
use gelda::Error;

use crate::oracles::Shared;
use crate::Check;

const SEEDS: u64 = 5;
const TARGET: usize = 2;
const KEPT: usize = 0;

/// Desk-scale run on the transfer family: C=4, K=3, M=16, 200 train per cell.
fn transfer_config(seed: u64, scenario: ScenarioSpec, out: &Path) -> PipelineConfig {
    PipelineConfig {
        dataset: DataSource::TransferFamily(TransferFamily {
            seed,
            // every shift leans toward a class, the target's toward the kept one
            alignment: vec![0.7; 3],
            drift_toward: vec![1, 2, KEPT],
            ..Default::default()
        }),
        scenario,
        adapter_hidden: vec![64, 32],
        tap_layer: 1,
        stage1: TrainConfig {
            epochs: 30,
            warmup_epochs: 3,
            ..Default::default()
        },
        stage3: TrainConfig {
            epochs: 30,
            warmup_epochs: 3,
            ..Default::default()
        },
        diffusion: DiffTrainConfig {
            iterations: 3_000,
            batch_size: 128,
            lr: 1e-3,
            sampling: BatchSampling::CellBalanced,
            ..Default::default()
        },
        denoiser: DenoiserConfig::preset("small").unwrap(),
        sampler: SamplerConfig {
            steps: 20,
            cfg_scale: 1.2,
            ..Default::default()
        },
        n_aug: 200,
        condition_mode: ConditionMode::ClassPlusSubdomainLatent,
        output_dir: out.to_path_buf(),
        seed,
        ..Default::default()
    }
}

fn run(cfg: &PipelineConfig) -> Result<RunReport, String> {
    let report = run_gelda(cfg).map_err(|e| e.to_string())?;
    eprintln!(
        "  seed {} {:?}{}: baseline UA {:.2}, GeLDA UA {:.2}, GT-only UA {}",
        cfg.seed,
        cfg.scenario.kind,
        if cfg.scenario.kind == ScenarioKind::KShot {
            format!(" k={}", cfg.scenario.shots)
        } else {
            String::new()
        },
        report.baseline.ua,
        report.gelda.ua,
        report
            .gt_only
            .as_ref()
            .map(|m| format!("{:.2}", m.ua))
            .unwrap_or_default()
    );
    Ok(report)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn zero_shot_transfer(_: &mut Shared) -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut gains = Vec::new();
    let mut lf_raises = true;
    for seed in 0..SEEDS {
        let cfg = transfer_config(
            seed,
            ScenarioSpec::zero_shot(TARGET, KEPT),
            &dir.path().join(format!("s{seed}")),
        );
        let report = match run(&cfg) {
            Ok(r) => r,
            Err(e) => return Check::new(false, format!("seed {seed}: {e}")),
        };
        gains.push(report.gelda.ua - report.baseline.ua);
        // the pipeline records the baseline failure; the target cells have no latents to mix
        let recorded = report
            .latent_fill
            .as_ref()
            .and_then(|lf| lf.error.as_deref())
            .is_some_and(|e| e.starts_with("insufficient support"));
        let empty: Vec<&[f32]> = Vec::new();
        let direct = latent_fill_augment(
            &empty,
            1,
            TARGET as u32,
            200,
            0.1,
            &mut rng::stream(seed, "lf", &[]),
            seed,
        );
        lf_raises &= recorded && matches!(direct, Err(Error::InsufficientSupport(_)));
    }
    let secs = start.elapsed().as_secs_f64();
    let avg = mean(&gains);
    Check::new(
        avg >= 5.0 && lf_raises && secs < 1200.0,
        format!(
            "target UA gain over baseline per seed {:?}, mean {avg:.2} points (>= 5.0); Latent Filling raises \
             InsufficientSupport: {lf_raises}; {secs:.0}s (< 1200s)",
            gains.iter().map(|g| (g * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    )
}

pub fn few_shot_ordering(_: &mut Shared) -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let shots = [5usize, 3, 1];
    // gains[seed][i] for shots[i]
    let mut gains = Vec::new();
    for seed in 0..SEEDS {
        let mut row = Vec::new();
        for &k in &shots {
            let cfg = transfer_config(
                seed,
                ScenarioSpec::k_shot(TARGET, k, seed),
                &dir.path().join(format!("s{seed}-k{k}")),
            );
            match run(&cfg) {
                Ok(r) => row.push(r.gelda.ua - r.gt_only.expect("baselines enabled").ua),
                Err(e) => return Check::new(false, format!("seed {seed}, k={k}: {e}")),
            }
        }
        gains.push(row);
    }
    let means: Vec<f64> = (0..shots.len())
        .map(|i| mean(&gains.iter().map(|r| r[i]).collect::<Vec<_>>()))
        .collect();
    // the gain per k is the seed average; single runs move in 0.25-point steps
    let nonneg = means.iter().all(|&g| g >= 0.0);
    let cells_nonneg = gains.iter().flatten().filter(|&&g| g >= 0.0).count();
    let largest_at_one = gains
        .iter()
        .filter(|row| row[2] >= row[0] && row[2] >= row[1])
        .count();
    Check::new(
        nonneg && largest_at_one >= 4,
        format!(
            "mean UA gain over GT-only for k = 5/3/1: {:.2}/{:.2}/{:.2} (each >= 0); largest at k=1 on {largest_at_one}/5 \
             seeds (>= 4); nonnegative in {cells_nonneg}/{} single runs; {:.0}s",
            means[0],
            means[1],
            means[2],
            gains.len() * shots.len(),
            start.elapsed().as_secs_f64()
        ),
    )
}

/// Tiny run used for the contract checks.
fn contract_config(data: &Path, out: &Path) -> PipelineConfig {
    PipelineConfig {
        dataset: DataSource::Path(data.to_path_buf()),
        scenario: ScenarioSpec::zero_shot(TARGET, KEPT),
        adapter_hidden: vec![16, 8],
        tap_layer: 1,
        stage1: TrainConfig {
            epochs: 5,
            warmup_epochs: 1,
            ..Default::default()
        },
        stage3: TrainConfig {
            epochs: 5,
            warmup_epochs: 1,
            ..Default::default()
        },
        diffusion: DiffTrainConfig {
            iterations: 100,
            ..Default::default()
        },
        denoiser: DenoiserConfig::preset("tiny").unwrap(),
        sampler: SamplerConfig {
            steps: 5,
            ..Default::default()
        },
        n_aug: 10,
        output_dir: out.to_path_buf(),
        seed: 7,
        ..Default::default()
    }
}

fn contracts(dir: &Path) -> Result<Vec<(&'static str, bool)>, Error> {
    let family = TransferFamily {
        n_train: 30,
        n_test: 10,
        ..Default::default()
    };
    let full = make_synthetic(&family.spec()?)?;
    let mut checks = Vec::new();

    // zero-shot leaves only the kept class in the target train cells
    let scenario = apply_scenario(&full, &ScenarioSpec::zero_shot(TARGET, KEPT))?;
    let h = &scenario.manifest().histogram;
    let only_kept = (0..4).all(|c| h[c][TARGET][0] == if c == KEPT { 30 } else { 0 })
        && (0..4).all(|c| (0..3).all(|k| h[c][k][1] == 10))
        && (0..4).all(|c| (0..3).filter(|&k| k != TARGET).all(|k| h[c][k][0] == 30));
    checks.push((
        "zero-shot target train cells hold only the kept class",
        only_kept,
    ));

    // a run, then the same run with every test vector altered
    let data = dir.join("data.geld");
    write_dataset(&full, &data)?;
    let report = run_gelda(&contract_config(&data, &dir.join("a")))?;
    let (man, records) = full.clone().into_parts();
    let altered: Vec<LatentRecord> = records
        .into_iter()
        .map(|mut r| {
            if r.split == Split::Test {
                r.vector.iter_mut().for_each(|v| *v = -*v + 1.0);
            }
            r
        })
        .collect();
    let data_b = dir.join("data_b.geld");
    write_dataset(&LatentDataset::new(man, altered)?, &data_b)?;
    let report_b = run_gelda(&contract_config(&data_b, &dir.join("b")))?;

    // frozen prefix: layer-1 tensors of the stage-1 and stage-3 files match byte for byte
    let s1 = read_checkpoint(dir.join("a/stage1.gelw"))?;
    let s3 = read_checkpoint(dir.join("a/stage3.gelw"))?;
    let same = |name: &str| -> Result<bool, Error> {
        let (a, b) = (s1.get(name)?, s3.get(name)?);
        Ok(a.dims == b.dims
            && a.data
                .iter()
                .zip(&b.data)
                .all(|(x, y)| x.to_bits() == y.to_bits()))
    };
    let frozen = same("adapter.1.weight")? && same("adapter.1.bias")? && !same("adapter.2.weight")?;
    checks.push((
        "stage-3 frozen prefix byte-identical, later layers trained",
        frozen,
    ));

    // isolation: training artifacts ignore the test split, which is read once per scored model
    let train_file = read_dataset(dir.join("a/train.geld"))?;
    let no_test = train_file.split(Split::Test).next().is_none();
    let artifacts_same = ["stage1", "denoiser", "gelda", "gt_only"]
        .iter()
        .all(|k| report.checkpoints.get(*k) == report_b.checkpoints.get(*k))
        && std::fs::read(dir.join("a/augmented.geld")).ok()
            == std::fs::read(dir.join("b/augmented.geld")).ok();
    let scored = 2
        + report.gt_only.is_some() as u64
        + report
            .latent_fill
            .as_ref()
            .is_some_and(|l| l.metrics.is_some()) as u64;
    checks.push(("train file holds no test records", no_test));
    checks.push((
        "checkpoints and augmentation unchanged when test vectors change",
        artifacts_same,
    ));
    // each scored model sees the target-subdomain test records once
    let target_test: u64 = (0..4).map(|c| h[c][TARGET][1]).sum();
    checks.push((
        "test split read only at evaluation",
        report.test_reads == scored * target_test && report_b.baseline != report.baseline,
    ));
    Ok(checks)
}

pub fn scenario_freezing_isolation(_: &mut Shared) -> Check {
    let dir = tempfile::tempdir().unwrap();
    match contracts(dir.path()) {
        Ok(checks) => {
            let failed: Vec<&str> = checks
                .iter()
                .filter(|(_, ok)| !ok)
                .map(|(n, _)| *n)
                .collect();
            Check::new(
                failed.is_empty(),
                if failed.is_empty() {
                    format!("{} contract checks hold", checks.len())
                } else {
                    format!("violated: {}", failed.join("; "))
                },
            )
        }
        Err(e) => Check::new(false, e.to_string()),
    }
}
