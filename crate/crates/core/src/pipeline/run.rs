use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::isolation::{partition, TestSplit};
use super::latent_fill::latent_fill_augment;
use crate::adapter::{build_adapter, finetune_stage3, train_stage1, AdapterModel};
use crate::condition::SemanticVectors;
use crate::diffusion::{train_diffusion, ConditionSetup, DiffTrainStats};
use crate::error::{Error, Result};
use crate::metrics::{metrics_csv, MetricsReport};
use crate::nn::write_checkpoint;
use crate::rng::{self, derive_seed};
use crate::sampler::{generate_set, AugmentationSet, Provenance};
use crate::store::{
    apply_scenario, read_dataset, write_dataset, LatentDataset, LatentRecord, ScenarioKind,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Classes to synthesize in one subdomain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugCells {
    pub subdomain_id: usize,
    pub classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFillOutcome {
    pub metrics: Option<MetricsReport>,
    /// Why the baseline could not run (zero-shot cells have no pairs to mix).
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    /// The configuration as executed, with derived stage seeds.
    pub config: PipelineConfig,
    pub checkpoints: BTreeMap<String, String>,
    pub augmented_cells: Vec<AugCells>,
    pub augmented_count: usize,
    pub diffusion: DiffTrainStats,
    /// Test subdomain the models are scored on; `None` means the whole split.
    pub eval_subdomain: Option<usize>,
    pub baseline: MetricsReport,
    pub gelda: MetricsReport,
    pub gt_only: Option<MetricsReport>,
    pub latent_fill: Option<LatentFillOutcome>,
    /// Test records handed to models, all during evaluation.
    pub test_reads: u64,
    pub frozen_prefix_checksum: String,
    pub timings: Vec<StageTiming>,
}

impl RunReport {
    /// JSON with timings cleared, for determinism comparisons.
    pub fn canonical_json(&self) -> String {
        let mut r = self.clone();
        r.timings.clear();
        serde_json::to_string_pretty(&r).expect("report serializes")
    }
}

struct Clock(Vec<StageTiming>);

impl Clock {
    fn stage<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(stage));
        self.0.push(StageTiming {
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

/// Which (class, subdomain) cells get synthetic latents.
pub fn augmentation_cells(cfg: &PipelineConfig, train: &LatentDataset) -> Vec<AugCells> {
    let man = train.manifest();
    let target = cfg.scenario.target_subdomain;
    match cfg.scenario.kind {
        ScenarioKind::ZeroShot => vec![AugCells {
            subdomain_id: target,
            classes: (0..man.c)
                .filter(|&c| c != cfg.scenario.kept_class)
                .collect(),
        }],
        ScenarioKind::KShot => vec![AugCells {
            subdomain_id: target,
            classes: (0..man.c).collect(),
        }],
        ScenarioKind::None => {
            // each small class is generated in the subdomain holding most of its records
            let mut by_sub: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (c, &n) in man.train_class_counts().iter().enumerate() {
                if n >= cfg.small_threshold {
                    continue;
                }
                let k = (0..man.k)
                    .max_by_key(|&k| (man.histogram[c][k][0], std::cmp::Reverse(k)))
                    .unwrap_or(0);
                by_sub.entry(k).or_default().push(c);
            }
            by_sub
                .into_iter()
                .map(|(subdomain_id, classes)| AugCells {
                    subdomain_id,
                    classes,
                })
                .collect()
        }
    }
}

/// Train records mapped into `Z^(l)` by the adapter prefix.
pub fn tap_dataset(
    model: &AdapterModel<f32>,
    train: &LatentDataset,
    l: usize,
) -> Result<LatentDataset> {
    let (x, _) = crate::adapter::split_matrix(train, crate::store::Split::Train, None);
    let z = model.tap_batch(&x, l)?;
    let records: Vec<_> = train.split(crate::store::Split::Train).collect();
    let man = train.manifest();
    let mut manifest = crate::store::DatasetManifest::new(z.ncols(), man.c, man.k);
    manifest.class_names = man.class_names.clone();
    manifest.subdomain_names = man.subdomain_names.clone();
    manifest.source_tag = format!("adapter tap Z^({l})");
    let tapped = records
        .iter()
        .zip(z.rows())
        .map(|(r, v)| LatentRecord {
            vector: v.to_vec(),
            ..(*r).clone()
        })
        .collect();
    LatentDataset::new(manifest, tapped)
}

fn save_model(model: &AdapterModel<f32>, path: &Path) -> Result<String> {
    let ck = model.to_checkpoint();
    write_checkpoint(&ck, path)?;
    ck.id()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Stages 1 to 3 and evaluation. Artifacts land in `cfg.output_dir` as
/// each stage finishes, so a failed run leaves its earlier outputs behind.
pub fn run_gelda(cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate()?;
    let cfg = cfg.resolved();
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_text(&out.join("config.toml"), &cfg.to_toml()?)?;
    let mut clock = Clock(Vec::new());
    let l = cfg.tap_layer;

    let (train, test) = clock.stage("data", || {
        let full = cfg.dataset.load()?;
        let scenario = apply_scenario(&full, &cfg.scenario)?;
        let (train, test) = partition(&scenario)?;
        write_dataset(&train, out.join("train.geld"))?;
        Ok((train, test))
    })?;
    let man = train.manifest().clone();

    let baseline = clock.stage("stage1", || {
        let mut model = build_adapter(man.m, man.c, &cfg.adapter_hidden, cfg.stage1.seed)?;
        train_stage1(&mut model, &train, &cfg.stage1)?;
        Ok(model)
    })?;
    let mut checkpoints = BTreeMap::new();
    checkpoints.insert(
        "stage1".to_string(),
        save_model(&baseline, &out.join("stage1.gelw"))?,
    );

    let tapped = clock.stage("tap", || {
        let tapped = tap_dataset(&baseline, &train, l)?;
        write_dataset(&tapped, out.join(format!("latents_z{l}.geld")))?;
        Ok(tapped)
    })?;

    let (denoiser, diffusion) = clock.stage("stage2", || {
        let semantic = cfg
            .semantic_vectors
            .as_ref()
            .map(|p| read_dataset(p).map(|ds| SemanticVectors::from_dataset(&ds, cfg.semantic_key)))
            .transpose()?;
        let setup = ConditionSetup {
            mode: cfg.condition_mode,
            semantic,
        };
        let (model, stats) = train_diffusion(&tapped, &setup, &cfg.denoiser, &cfg.diffusion)?;
        write_checkpoint(&model.to_checkpoint(), out.join("denoiser.gelw"))?;
        Ok((model, stats))
    })?;
    checkpoints.insert("denoiser".to_string(), denoiser.id()?);

    let cells = augmentation_cells(&cfg, &train);
    let aug = clock.stage("generate", || {
        let mut all = AugmentationSet::empty(
            tapped.dim(),
            Provenance {
                method: "diffusion".into(),
                checkpoint_id: Some(checkpoints["denoiser"].clone()),
                sampler: Some(cfg.sampler),
                seed: cfg.sampler.seed,
            },
        );
        for cell in &cells {
            let set = generate_set(
                &denoiser,
                &cell.classes,
                cell.subdomain_id,
                cfg.n_aug,
                &cfg.sampler,
            )?;
            all.vectors
                .append(ndarray::Axis(0), set.vectors.view())
                .expect("widths agree");
            all.labels.extend(set.labels);
        }
        all.write(tapped.manifest(), out.join("augmented.geld"))?;
        Ok(all)
    })?;

    // stage-3 ground truth: the target subdomain for subdomain scenarios
    let eval_subdomain = match cfg.scenario.kind {
        ScenarioKind::None => None,
        _ => Some(cfg.scenario.target_subdomain),
    };
    let gt = match eval_subdomain {
        Some(k) => tapped.filter(|r| r.subdomain_id as usize == k),
        None => tapped.clone(),
    };
    let finetune = |set: &AugmentationSet| -> Result<AdapterModel<f32>> {
        let mut model = baseline.clone();
        finetune_stage3(&mut model, l, &gt, set, &cfg.stage3, None)?;
        Ok(model)
    };
    let gelda = clock.stage("stage3", || finetune(&aug))?;
    checkpoints.insert(
        "gelda".to_string(),
        save_model(&gelda, &out.join("stage3.gelw"))?,
    );
    let frozen_prefix_checksum = baseline.prefix_checksum(l)?;
    if gelda.prefix_checksum(l)? != frozen_prefix_checksum {
        return Err(Error::Integrity("stage 3 changed the frozen prefix".into()).in_stage("stage3"));
    }

    let gt_only = if cfg.baselines {
        let empty = AugmentationSet::empty(tapped.dim(), aug.provenance.clone());
        let model = clock.stage("gt_only", || finetune(&empty))?;
        checkpoints.insert(
            "gt_only".to_string(),
            save_model(&model, &out.join("gt_only.gelw"))?,
        );
        Some(model)
    } else {
        None
    };
    let latent_fill = if cfg.baselines {
        let seed = derive_seed(cfg.seed, "latent-fill", &[]);
        let filled = clock.stage("latent_fill", || {
            let mut all = AugmentationSet::empty(tapped.dim(), aug.provenance.clone());
            for cell in &cells {
                for &c in &cell.classes {
                    let pool: Vec<&[f32]> = tapped
                        .records()
                        .iter()
                        .filter(|r| {
                            r.class_id as usize == c && r.subdomain_id as usize == cell.subdomain_id
                        })
                        .map(|r| r.vector.as_slice())
                        .collect();
                    let mut r =
                        rng::stream(seed, "latent-fill", &[c as u64, cell.subdomain_id as u64]);
                    let set = latent_fill_augment(
                        &pool,
                        c as u32,
                        cell.subdomain_id as u32,
                        cfg.n_aug,
                        cfg.latent_fill_noise_std,
                        &mut r,
                        seed,
                    )?;
                    all.vectors
                        .append(ndarray::Axis(0), set.vectors.view())
                        .expect("widths agree");
                    all.labels.extend(set.labels);
                    all.provenance = set.provenance;
                }
            }
            finetune(&all)
        });
        Some(filled)
    } else {
        None
    };

    let train_counts = man.train_class_counts();
    let excluded = cfg.excluded_class.or(match cfg.scenario.kind {
        ScenarioKind::ZeroShot => Some(cfg.scenario.kept_class),
        _ => None,
    });
    let score = |test: &TestSplit, model: &AdapterModel<f32>| {
        test.evaluate(model, eval_subdomain, Some(&train_counts), excluded)
    };
    let (baseline_m, gelda_m, gt_only_m, latent_fill) = clock.stage("evaluate", || {
        let b = score(&test, &baseline)?;
        let g = score(&test, &gelda)?;
        let gt = gt_only.as_ref().map(|m| score(&test, m)).transpose()?;
        let lf = match latent_fill {
            None => None,
            Some(Ok(model)) => Some(LatentFillOutcome {
                metrics: Some(score(&test, &model)?),
                error: None,
            }),
            Some(Err(e)) => Some(LatentFillOutcome {
                metrics: None,
                error: Some(e.root().to_string()),
            }),
        };
        Ok((b, g, gt, lf))
    })?;
    write_text(&out.join("metrics_baseline.csv"), &metrics_csv(&baseline_m))?;
    write_text(&out.join("metrics_gelda.csv"), &metrics_csv(&gelda_m))?;
    if let Some(m) = &gt_only_m {
        write_text(&out.join("metrics_gt_only.csv"), &metrics_csv(m))?;
    }
    if let Some(LatentFillOutcome {
        metrics: Some(m), ..
    }) = &latent_fill
    {
        write_text(&out.join("metrics_latent_fill.csv"), &metrics_csv(m))?;
    }

    let report = RunReport {
        seed: cfg.seed,
        augmented_count: aug.len(),
        augmented_cells: cells,
        config: cfg,
        checkpoints,
        diffusion,
        eval_subdomain,
        baseline: baseline_m,
        gelda: gelda_m,
        gt_only: gt_only_m,
        latent_fill,
        test_reads: test.reads(),
        frozen_prefix_checksum,
        timings: clock.0,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
    write_text(&out.join("report.json"), &json)?;
    Ok(report)
}
