//! `gelda`: run the latent augmentation pipeline stage by stage or end to end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gelda::adapter::{build_adapter, finetune_stage3, train_stage1, AdapterModel};
use gelda::condition::SemanticVectors;
use gelda::diagnostics::gradient_suite;
use gelda::diffusion::{train_diffusion, ConditionSetup, DenoiserModel};
use gelda::metrics::metrics_csv;
use gelda::nn::{read_checkpoint, write_checkpoint};
use gelda::pipeline::{
    partition, run_gelda, sweep, sweep_table, tap_dataset, PipelineConfig, SweepAxis,
};
use gelda::sampler::{generate_set, AugmentationSet};
use gelda::store::{
    apply_scenario, ingest, read_dataset, read_jsonl, write_dataset, DatasetManifest, LatentDataset,
};
use gelda::{Error, Result};
use serde_json::json;

/// Gradient checks must stay below this relative error.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "gelda", version, about = "Generative latent data augmentation")]
struct Cli {
    /// TOML file whose keys are the pipeline config fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Top-level seed; every stage seed derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic dataset as a GELD file.
    Synth {
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Convert JSON-lines vectors (frame-level ones are averaged) to GELD.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Comma-separated class names, fixing C.
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<String>>,
        /// Comma-separated subdomain names, fixing K.
        #[arg(long, value_delimiter = ',')]
        subdomains: Option<Vec<String>>,
        #[arg(long, default_value = "")]
        source_tag: String,
    },
    /// Stage 1: train the adapter on the scenario's train split.
    TrainAdapter {
        /// GELD file; defaults to the configured dataset.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Stage 2: tap train latents at the configured layer and train the denoiser.
    TrainDiffusion {
        #[arg(long)]
        adapter: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Sample latents for classes in one subdomain.
    Generate {
        #[arg(long)]
        denoiser: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        classes: Vec<usize>,
        #[arg(long)]
        subdomain: usize,
        /// Samples per class; defaults to `n_aug`.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Stage 3: fine-tune the layers above the tap on latents plus augmentation.
    Finetune {
        #[arg(long)]
        adapter: PathBuf,
        /// Ground-truth latents in the tapped space.
        #[arg(long)]
        latents: PathBuf,
        #[arg(long)]
        aug: Option<PathBuf>,
        /// Keep only ground-truth latents of this subdomain.
        #[arg(long)]
        subdomain: Option<usize>,
    },
    /// Score an adapter on the test split.
    Evaluate {
        #[arg(long)]
        adapter: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        subdomain: Option<usize>,
        /// Class left out of `ua_wo_excluded`.
        #[arg(long)]
        excluded: Option<usize>,
    },
    /// All stages, baselines and evaluation.
    Run,
    /// One run per value of a config axis.
    Sweep {
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Finite-difference check of the adapter and denoiser gradients.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_adapter(path: &Path) -> Result<AdapterModel<f32>> {
    AdapterModel::from_checkpoint(&read_checkpoint(path)?)
}

/// The scenario-applied dataset from `--data` or the configured source.
fn scenario_data(cfg: &PipelineConfig, data: Option<&Path>) -> Result<LatentDataset> {
    let full = match data {
        Some(path) => read_dataset(path)?,
        None => cfg.dataset.load()?,
    };
    apply_scenario(&full, &cfg.scenario)
}

fn save_adapter(model: &AdapterModel<f32>, path: &Path) -> Result<String> {
    let ck = model.to_checkpoint();
    write_checkpoint(&ck, path)?;
    ck.id()
}

fn execute(cli: Cli) -> Result<ExitCode> {
    let cfg = load_config(&cli)?;
    let resolved = cfg.resolved();
    let out = cfg.output_dir.clone();
    match cli.command {
        Command::Synth { output } => {
            let ds = cfg.dataset.load()?;
            let path = output.unwrap_or_else(|| out.join("synthetic.geld"));
            if let Some(parent) = path.parent() {
                create_dir(parent)?;
            }
            let bytes = write_dataset(&ds, &path)?;
            print_json(&json!({"path": path, "bytes": bytes, "manifest": ds.manifest()}))?;
        }
        Command::Ingest {
            input,
            output,
            classes,
            subdomains,
            source_tag,
        } => {
            let ds = ingest(&read_jsonl(&input)?, classes, subdomains, &source_tag)?;
            let bytes = write_dataset(&ds, &output)?;
            print_json(&json!({"path": output, "bytes": bytes, "manifest": ds.manifest()}))?;
        }
        Command::TrainAdapter { data } => {
            let (train, _) = partition(&scenario_data(&cfg, data.as_deref())?)?;
            let man = train.manifest();
            let mut model = build_adapter(man.m, man.c, &cfg.adapter_hidden, resolved.stage1.seed)?;
            let history = train_stage1(&mut model, &train, &resolved.stage1)?;
            create_dir(&out)?;
            let path = out.join("stage1.gelw");
            let id = save_adapter(&model, &path)?;
            print_json(&json!({"checkpoint": path, "id": id, "final_epoch": history.last()}))?;
        }
        Command::TrainDiffusion { adapter, data } => {
            let (train, _) = partition(&scenario_data(&cfg, data.as_deref())?)?;
            let model = load_adapter(&adapter)?;
            let l = cfg.tap_layer;
            let tapped = tap_dataset(&model, &train, l)?;
            create_dir(&out)?;
            let latents = out.join(format!("latents_z{l}.geld"));
            write_dataset(&tapped, &latents)?;
            let semantic = cfg
                .semantic_vectors
                .as_ref()
                .map(|p| {
                    read_dataset(p).map(|ds| SemanticVectors::from_dataset(&ds, cfg.semantic_key))
                })
                .transpose()?;
            let setup = ConditionSetup {
                mode: cfg.condition_mode,
                semantic,
            };
            let (denoiser, stats) =
                train_diffusion(&tapped, &setup, &cfg.denoiser, &resolved.diffusion)?;
            let path = out.join("denoiser.gelw");
            write_checkpoint(&denoiser.to_checkpoint(), &path)?;
            print_json(
                &json!({"latents": latents, "checkpoint": path, "id": denoiser.id()?, "stats": stats}),
            )?;
        }
        Command::Generate {
            denoiser,
            classes,
            subdomain,
            n,
        } => {
            let model = DenoiserModel::from_checkpoint(&read_checkpoint(&denoiser)?)?;
            let set = generate_set(
                &model,
                &classes,
                subdomain,
                n.unwrap_or(cfg.n_aug),
                &resolved.sampler,
            )?;
            let source = model.condition();
            let k = source.subdomain_pool.len().max(subdomain + 1);
            create_dir(&out)?;
            let path = out.join("augmented.geld");
            set.write(
                &DatasetManifest::new(set.dim(), source.num_classes, k),
                &path,
            )?;
            print_json(&json!({"path": path, "count": set.len(), "provenance": set.provenance}))?;
        }
        Command::Finetune {
            adapter,
            latents,
            aug,
            subdomain,
        } => {
            let mut model = load_adapter(&adapter)?;
            let latents = read_dataset(&latents)?;
            let gt = match subdomain {
                Some(k) => latents.filter(|r| r.subdomain_id as usize == k),
                None => latents,
            };
            let aug = match aug {
                Some(path) => AugmentationSet::from_dataset(&read_dataset(path)?),
                None => AugmentationSet::empty(
                    gt.dim(),
                    gelda::sampler::Provenance {
                        method: "none".into(),
                        checkpoint_id: None,
                        sampler: None,
                        seed: 0,
                    },
                ),
            };
            let history =
                finetune_stage3(&mut model, cfg.tap_layer, &gt, &aug, &resolved.stage3, None)?;
            create_dir(&out)?;
            let path = out.join("stage3.gelw");
            let id = save_adapter(&model, &path)?;
            print_json(&json!({
                "checkpoint": path,
                "id": id,
                "frozen_prefix_checksum": model.prefix_checksum(cfg.tap_layer)?,
                "final_epoch": history.last(),
            }))?;
        }
        Command::Evaluate {
            adapter,
            data,
            subdomain,
            excluded,
        } => {
            let model = load_adapter(&adapter)?;
            let (train, test) = partition(&scenario_data(&cfg, data.as_deref())?)?;
            let counts = train.manifest().train_class_counts();
            let report = test.evaluate(&model, subdomain, Some(&counts), excluded)?;
            create_dir(&out)?;
            write_text(&out.join("metrics.csv"), &metrics_csv(&report))?;
            print_json(&report)?;
        }
        Command::Run => {
            let report = run_gelda(&cfg)?;
            print_json(&json!({
                "output_dir": out,
                "baseline_ua": report.baseline.ua,
                "gelda_ua": report.gelda.ua,
                "gt_only_ua": report.gt_only.as_ref().map(|m| m.ua),
                "latent_fill": report.latent_fill,
                "augmented_count": report.augmented_count,
                "timings": report.timings,
            }))?;
        }
        Command::Sweep { axis, values } => {
            let entries = sweep(&cfg, axis, &values)?;
            print!("{}", sweep_table(axis, &entries));
        }
        Command::Gradcheck { instances } => {
            let report = gradient_suite(instances, cfg.seed)?;
            print_json(&report)?;
            if !report.passes(GRADCHECK_TOLERANCE) {
                eprintln!("error: gradient check above {GRADCHECK_TOLERANCE:e}");
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
