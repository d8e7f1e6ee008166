//! Imbalance scenarios carved out of a full dataset.
//!
//! Only the train split is filtered; test records always pass through.

use std::collections::HashMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{LatentDataset, Split};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[default]
    None,
    /// Target subdomain keeps only `kept_class` train records.
    ZeroShot,
    /// Target subdomain keeps `shots` train records per class.
    KShot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub target_subdomain: usize,
    pub kept_class: usize,
    pub shots: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn zero_shot(target_subdomain: usize, kept_class: usize) -> Self {
        Self {
            kind: ScenarioKind::ZeroShot,
            target_subdomain,
            kept_class,
            ..Default::default()
        }
    }

    pub fn k_shot(target_subdomain: usize, shots: usize, seed: u64) -> Self {
        Self {
            kind: ScenarioKind::KShot,
            target_subdomain,
            shots,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self, c: usize, k: usize) -> Result<()> {
        if self.kind == ScenarioKind::None {
            return Ok(());
        }
        if self.target_subdomain >= k {
            return Err(Error::InvalidScenario(format!(
                "target subdomain {} >= k={k}",
                self.target_subdomain
            )));
        }
        if self.kind == ScenarioKind::ZeroShot && self.kept_class >= c {
            return Err(Error::InvalidScenario(format!(
                "kept class {} >= c={c}",
                self.kept_class
            )));
        }
        Ok(())
    }
}

pub fn apply_scenario(dataset: &LatentDataset, scenario: &ScenarioSpec) -> Result<LatentDataset> {
    let man = dataset.manifest();
    scenario.validate(man.c, man.k)?;
    let target = scenario.target_subdomain as u32;
    match scenario.kind {
        ScenarioKind::None => Ok(dataset.clone()),
        ScenarioKind::ZeroShot => {
            let kept = scenario.kept_class as u32;
            Ok(dataset.filter(|r| {
                r.split == Split::Test || r.subdomain_id != target || r.class_id == kept
            }))
        }
        ScenarioKind::KShot => {
            // Positions of target train records, per class, in dataset order.
            let mut cells: HashMap<u32, Vec<usize>> = HashMap::new();
            for (i, r) in dataset.records().iter().enumerate() {
                if r.split == Split::Train && r.subdomain_id == target {
                    cells.entry(r.class_id).or_default().push(i);
                }
            }
            let mut keep = vec![true; dataset.len()];
            for (&class, positions) in &cells {
                positions.iter().for_each(|&i| keep[i] = false);
                let mut r = rng::stream(
                    scenario.seed,
                    "k-shot",
                    &[class as u64, scenario.target_subdomain as u64],
                );
                let take = scenario.shots.min(positions.len());
                for j in index::sample(&mut r, positions.len(), take) {
                    keep[positions[j]] = true;
                }
            }
            let mut it = keep.into_iter();
            Ok(dataset.filter(|_| it.next().unwrap()))
        }
    }
}
