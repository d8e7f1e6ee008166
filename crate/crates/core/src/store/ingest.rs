//! External vectors as JSON lines, one record per line.
//!
//! Each line holds `class`, `subdomain`, `split` (`"train"` or `"test"`) and
//! either a pooled `vector` or frame-level `frames`, which are averaged.

use std::io::BufRead;
use std::path::Path;

use serde::Deserialize;

use super::{temporal_pool, DatasetManifest, LatentDataset, LatentRecord, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalRecord {
    pub class: u32,
    #[serde(default)]
    pub subdomain: u32,
    pub split: Split,
    #[serde(default)]
    pub vector: Option<Vec<f32>>,
    #[serde(default)]
    pub frames: Option<Vec<Vec<f32>>>,
}

impl ExternalRecord {
    /// The utterance-level vector: `vector` as given or `frames` pooled.
    pub fn pooled(&self) -> Result<Vec<f32>> {
        match (&self.vector, &self.frames) {
            (Some(v), None) => Ok(v.clone()),
            (None, Some(frames)) => temporal_pool(frames),
            _ => Err(Error::Format(
                "record needs exactly one of `vector` and `frames`".into(),
            )),
        }
    }
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<ExternalRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

/// Pool and validate external records into a dataset. Class and subdomain
/// counts come from the name lists when given, else from the largest id.
pub fn ingest(
    records: &[ExternalRecord],
    class_names: Option<Vec<String>>,
    subdomain_names: Option<Vec<String>>,
    source_tag: &str,
) -> Result<LatentDataset> {
    if records.is_empty() {
        return Err(Error::EmptyDataset("no records to ingest".into()));
    }
    let mut latents = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let vector = r
            .pooled()
            .map_err(|e| Error::Format(format!("record {i}: {e}")))?;
        latents.push(LatentRecord {
            vector,
            class_id: r.class,
            subdomain_id: r.subdomain,
            split: r.split,
        });
    }
    let m = latents[0].vector.len();
    let c = class_names.as_ref().map_or_else(
        || {
            latents
                .iter()
                .map(|r| r.class_id as usize + 1)
                .max()
                .unwrap_or(0)
        },
        Vec::len,
    );
    let k = subdomain_names.as_ref().map_or_else(
        || {
            latents
                .iter()
                .map(|r| r.subdomain_id as usize + 1)
                .max()
                .unwrap_or(0)
        },
        Vec::len,
    );
    let mut manifest = DatasetManifest::new(m, c, k);
    if let Some(names) = class_names {
        manifest.class_names = names;
    }
    if let Some(names) = subdomain_names {
        manifest.subdomain_names = names;
    }
    manifest.source_tag = source_tag.to_string();
    LatentDataset::new(manifest, latents)
}
