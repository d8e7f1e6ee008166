use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::run::{run_gelda, RunReport};
use crate::diffusion::DenoiserConfig;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    DenoiserSize,
    NAug,
    TapLayer,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "denoiser_size" => Ok(SweepAxis::DenoiserSize),
            "n_aug" => Ok(SweepAxis::NAug),
            "tap_layer" => Ok(SweepAxis::TapLayer),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep axis `{other}`"
            ))),
        }
    }
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::DenoiserSize => "denoiser_size",
            SweepAxis::NAug => "n_aug",
            SweepAxis::TapLayer => "tap_layer",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &PipelineConfig, value: &str) -> Result<PipelineConfig> {
        let mut cfg = base.clone();
        let int = |v: &str| {
            v.parse::<usize>().map_err(|_| {
                Error::InvalidConfig(format!("{} value `{v}` is not an integer", self.name()))
            })
        };
        match self {
            SweepAxis::DenoiserSize => cfg.denoiser = DenoiserConfig::preset(value)?,
            SweepAxis::NAug => cfg.n_aug = int(value)?,
            SweepAxis::TapLayer => cfg.tap_layer = int(value)?,
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub value: String,
    pub report: Option<RunReport>,
    pub error: Option<String>,
}

/// One full run per value in its own subdirectory, seeded from the base
/// seed and the value's position. A failing value is recorded and the
/// sweep moves on.
pub fn sweep(base: &PipelineConfig, axis: SweepAxis, values: &[String]) -> Result<Vec<SweepEntry>> {
    if values.is_empty() {
        return Err(Error::InvalidConfig(
            "sweep needs at least one value".into(),
        ));
    }
    let mut entries = Vec::with_capacity(values.len());
    for (i, value) in values.iter().enumerate() {
        let outcome = axis.apply(base, value).and_then(|mut cfg| {
            cfg.seed = derive_seed(base.seed, "sweep", &[i as u64]);
            cfg.output_dir = base.output_dir.join(format!("{}-{value}", axis.name()));
            run_gelda(&cfg)
        });
        entries.push(match outcome {
            Ok(report) => SweepEntry {
                value: value.clone(),
                report: Some(report),
                error: None,
            },
            Err(e) => SweepEntry {
                value: value.clone(),
                report: None,
                error: Some(e.to_string()),
            },
        });
    }
    let table = sweep_table(axis, &entries);
    std::fs::create_dir_all(&base.output_dir).map_err(|e| Error::io(&base.output_dir, e))?;
    let path = base.output_dir.join(format!("sweep-{}.csv", axis.name()));
    std::fs::write(&path, table).map_err(|e| Error::io(&path, e))?;
    Ok(entries)
}

/// One row per value: UA of each model plus GeLDA's WA and Macro-F1.
pub fn sweep_table(axis: SweepAxis, entries: &[SweepEntry]) -> String {
    let mut out = format!(
        "{},status,baseline_ua,gelda_ua,gt_only_ua,gelda_wa,gelda_macro_f1\n",
        axis.name()
    );
    for e in entries {
        match &e.report {
            Some(r) => {
                let gt = r
                    .gt_only
                    .as_ref()
                    .map(|m| format!("{:.2}", m.ua))
                    .unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},ok,{:.2},{:.2},{},{:.2},{:.2}",
                    e.value, r.baseline.ua, r.gelda.ua, gt, r.gelda.wa, r.gelda.macro_f1
                );
            }
            None => {
                let _ = writeln!(out, "{},failed,,,,,", e.value);
            }
        }
    }
    out
}
