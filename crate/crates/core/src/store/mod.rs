//! Latent datasets: records, manifests, the GELD file format, synthetic
//! generation and imbalance scenarios.

mod format;
mod ingest;
mod pool;
mod scenario;
mod synthetic;

pub use format::{manifest_path, read_dataset, write_dataset, FORMAT_VERSION, HEADER_LEN, MAGIC};
pub use ingest::{ingest, read_jsonl, ExternalRecord};
pub use pool::temporal_pool;
pub use scenario::{apply_scenario, ScenarioKind, ScenarioSpec};
pub use synthetic::{make_synthetic, SyntheticSpec, TransferFamily};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn index(self) -> usize {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }
}

/// One embedding with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentRecord {
    pub vector: Vec<f32>,
    pub class_id: u32,
    pub subdomain_id: u32,
    pub split: Split,
}

/// Per-(class, subdomain) counts as `[train, test]`.
pub type Histogram = Vec<Vec<[u64; 2]>>;

/// Sidecar metadata describing a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub m: usize,
    pub c: usize,
    pub k: usize,
    pub class_names: Vec<String>,
    pub subdomain_names: Vec<String>,
    /// `histogram[class][subdomain] = [train, test]`
    pub histogram: Histogram,
    pub source_tag: String,
}

impl DatasetManifest {
    /// Manifest with generated names and an empty histogram.
    pub fn new(m: usize, c: usize, k: usize) -> Self {
        Self {
            m,
            c,
            k,
            class_names: (0..c).map(|i| format!("class{i}")).collect(),
            subdomain_names: (0..k).map(|i| format!("subdomain{i}")).collect(),
            histogram: vec![vec![[0, 0]; k]; c],
            source_tag: String::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_names.len() != self.c {
            return Err(Error::Integrity(format!(
                "{} class names for c={}",
                self.class_names.len(),
                self.c
            )));
        }
        if self.subdomain_names.len() != self.k {
            return Err(Error::Integrity(format!(
                "{} subdomain names for k={}",
                self.subdomain_names.len(),
                self.k
            )));
        }
        if self.histogram.len() != self.c || self.histogram.iter().any(|row| row.len() != self.k) {
            return Err(Error::Integrity(
                "histogram shape does not match (c, k)".into(),
            ));
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.histogram
            .iter()
            .flatten()
            .map(|cell| cell[0] + cell[1])
            .sum()
    }

    pub fn count(&self, class: usize, subdomain: usize, split: Split) -> u64 {
        self.histogram[class][subdomain][split.index()]
    }

    /// Train counts per class, summed over subdomains.
    pub fn train_class_counts(&self) -> Vec<u64> {
        self.histogram
            .iter()
            .map(|row| row.iter().map(|cell| cell[0]).sum())
            .collect()
    }
}

/// An ordered, validated collection of records sharing one manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDataset {
    records: Vec<LatentRecord>,
    manifest: DatasetManifest,
}

fn histogram_of(records: &[LatentRecord], c: usize, k: usize) -> Histogram {
    let mut h = vec![vec![[0u64; 2]; k]; c];
    for r in records {
        h[r.class_id as usize][r.subdomain_id as usize][r.split.index()] += 1;
    }
    h
}

impl LatentDataset {
    /// Build from records, recomputing the manifest histogram.
    pub fn new(mut manifest: DatasetManifest, records: Vec<LatentRecord>) -> Result<Self> {
        check_records(&manifest, &records)?;
        manifest.histogram = histogram_of(&records, manifest.c, manifest.k);
        manifest.validate()?;
        Ok(Self { records, manifest })
    }

    /// Build from records, requiring the manifest histogram to already agree.
    pub fn with_manifest(manifest: DatasetManifest, records: Vec<LatentRecord>) -> Result<Self> {
        manifest.validate()?;
        check_records(&manifest, &records)?;
        let h = histogram_of(&records, manifest.c, manifest.k);
        if h != manifest.histogram {
            for (c, row) in h.iter().enumerate() {
                for (k, cell) in row.iter().enumerate() {
                    if *cell != manifest.histogram[c][k] {
                        return Err(Error::Integrity(format!(
                            "manifest histogram for class {c}, subdomain {k} is {:?} but records give {:?}",
                            manifest.histogram[c][k], cell
                        )));
                    }
                }
            }
        }
        Ok(Self { records, manifest })
    }

    pub fn records(&self) -> &[LatentRecord] {
        &self.records
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn dim(&self) -> usize {
        self.manifest.m
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_parts(self) -> (DatasetManifest, Vec<LatentRecord>) {
        (self.manifest, self.records)
    }

    pub fn set_source_tag(&mut self, tag: impl Into<String>) {
        self.manifest.source_tag = tag.into();
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &LatentRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Keep records matching `keep`, recomputing the histogram.
    pub fn filter(&self, mut keep: impl FnMut(&LatentRecord) -> bool) -> LatentDataset {
        let records: Vec<_> = self.records.iter().filter(|r| keep(r)).cloned().collect();
        let mut manifest = self.manifest.clone();
        manifest.histogram = histogram_of(&records, manifest.c, manifest.k);
        LatentDataset { records, manifest }
    }
}

fn check_records(manifest: &DatasetManifest, records: &[LatentRecord]) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        if r.vector.len() != manifest.m {
            return Err(Error::dims(
                format!("record {i}"),
                manifest.m,
                r.vector.len(),
            ));
        }
        if r.class_id as usize >= manifest.c {
            return Err(Error::Integrity(format!(
                "record {i}: class id {} >= c={}",
                r.class_id, manifest.c
            )));
        }
        if r.subdomain_id as usize >= manifest.k {
            return Err(Error::Integrity(format!(
                "record {i}: subdomain id {} >= k={}",
                r.subdomain_id, manifest.k
            )));
        }
        if r.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "record {i}: non-finite vector entry"
            )));
        }
    }
    Ok(())
}
