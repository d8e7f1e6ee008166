use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapter::{TrainConfig, DEFAULT_HIDDEN};
use crate::condition::{ConditionMode, SemanticKey};
use crate::diffusion::{DenoiserConfig, DiffTrainConfig};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::sampler::SamplerConfig;
use crate::store::{
    make_synthetic, read_dataset, LatentDataset, ScenarioSpec, SyntheticSpec, TransferFamily,
};

/// Where the stage-1 vectors come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Path(PathBuf),
    Synthetic(SyntheticSpec),
    TransferFamily(TransferFamily),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::TransferFamily(TransferFamily::default())
    }
}

impl DataSource {
    pub fn load(&self) -> Result<LatentDataset> {
        match self {
            DataSource::Path(p) => read_dataset(p),
            DataSource::Synthetic(spec) => make_synthetic(spec),
            DataSource::TransferFamily(f) => make_synthetic(&f.spec()?),
        }
    }
}

/// Everything one end-to-end run needs. Field names are the config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: DataSource,
    pub scenario: ScenarioSpec,
    /// Hidden widths of the adapter; `L = adapter_hidden.len() + 1`.
    pub adapter_hidden: Vec<usize>,
    pub tap_layer: usize,
    pub stage1: TrainConfig,
    pub stage3: TrainConfig,
    pub diffusion: DiffTrainConfig,
    pub denoiser: DenoiserConfig,
    pub sampler: SamplerConfig,
    /// Generated vectors per augmented (class, subdomain) cell.
    pub n_aug: usize,
    pub condition_mode: ConditionMode,
    /// Semantic-vector file (GELD, K = 1) for the semantic condition mode.
    pub semantic_vectors: Option<PathBuf>,
    pub semantic_key: SemanticKey,
    /// Without a subdomain scenario, classes with fewer train records are augmented.
    pub small_threshold: u64,
    /// Class left out of `ua_wo_excluded`; zero-shot runs default to the kept class.
    pub excluded_class: Option<usize>,
    pub latent_fill_noise_std: f64,
    /// Also fine-tune on ground truth only and with Latent Filling.
    pub baselines: bool,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: DataSource::default(),
            scenario: ScenarioSpec::default(),
            adapter_hidden: DEFAULT_HIDDEN.to_vec(),
            tap_layer: 1,
            stage1: TrainConfig::default(),
            stage3: TrainConfig::default(),
            diffusion: DiffTrainConfig {
                iterations: 20_000,
                ..Default::default()
            },
            denoiser: DenoiserConfig::default(),
            sampler: SamplerConfig::default(),
            n_aug: 200,
            condition_mode: ConditionMode::ClassPlusSubdomainLatent,
            semantic_vectors: None,
            semantic_key: SemanticKey::Class,
            small_threshold: crate::metrics::SMALL_BELOW,
            excluded_class: None,
            latent_fill_noise_std: 0.1,
            baselines: true,
            output_dir: PathBuf::from("gelda-out"),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.tap_layer > self.adapter_hidden.len() {
            return Err(Error::InvalidLayer {
                layer: self.tap_layer,
                layers: self.adapter_hidden.len() + 1,
            });
        }
        if !(self.latent_fill_noise_std >= 0.0) {
            return Err(Error::InvalidConfig(
                "latent_fill_noise_std must be >= 0".into(),
            ));
        }
        if self.condition_mode == ConditionMode::ClassPlusSemanticVector
            && self.semantic_vectors.is_none()
        {
            return Err(Error::InvalidConfig(
                "semantic condition mode needs semantic_vectors".into(),
            ));
        }
        self.stage1.validate()?;
        self.stage3.validate()?;
        self.diffusion.validate()?;
        self.denoiser.validate()?;
        self.sampler.validate()
    }

    /// Copy with every stage seed derived from `seed`.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        let s = self.seed;
        c.scenario.seed = derive_seed(s, "scenario", &[]);
        c.stage1.seed = derive_seed(s, "stage1", &[]);
        c.stage3.seed = derive_seed(s, "stage3", &[]);
        c.diffusion.seed = derive_seed(s, "diffusion", &[]);
        c.sampler.seed = derive_seed(s, "sampler", &[]);
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_keys() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
        for key in [
            "tap_layer",
            "n_aug",
            "condition_mode",
            "output_dir",
            "[diffusion]",
            "[sampler]",
            "[stage1]",
        ] {
            assert!(text.contains(key), "{key}");
        }
        let partial = PipelineConfig::from_toml("n_aug = 5\n[sampler]\nsteps = 4\n").unwrap();
        assert_eq!(partial.n_aug, 5);
        assert_eq!(partial.sampler.steps, 4);
        assert_eq!(partial.sampler.cfg_scale, 1.2);
        assert!(matches!(
            PipelineConfig::from_toml("bogus = 1"),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn validation() {
        let bad = PipelineConfig {
            tap_layer: 3,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidLayer { .. })));
        let bad = PipelineConfig {
            condition_mode: ConditionMode::ClassPlusSemanticVector,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn resolved_seeds_depend_only_on_seed() {
        let a = PipelineConfig {
            seed: 4,
            ..Default::default()
        }
        .resolved();
        let b = PipelineConfig {
            seed: 4,
            n_aug: 1,
            ..Default::default()
        }
        .resolved();
        assert_eq!(a.stage1.seed, b.stage1.seed);
        assert_ne!(a.stage1.seed, a.stage3.seed);
    }
}
