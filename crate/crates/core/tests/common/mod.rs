//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::path::Path;

use gelda::error::Error;
use gelda::metrics::MetricsReport;
use gelda::store::{
    manifest_path, read_dataset, write_dataset, DatasetManifest, LatentDataset, LatentRecord, Split,
};
use rand::Rng;

/// A finite f32 with arbitrary bits, including subnormals and -0.
pub fn finite_f32(rng: &mut impl Rng) -> f32 {
    loop {
        let v = f32::from_bits(rng.random());
        if v.is_finite() {
            return v;
        }
    }
}

pub fn random_dataset(rng: &mut impl Rng, min_records: usize) -> LatentDataset {
    let m = rng.random_range(1..=24);
    let c = rng.random_range(1..=6);
    let k = rng.random_range(1..=4);
    let n = rng.random_range(min_records..=min_records + 40);
    let records = (0..n)
        .map(|_| LatentRecord {
            vector: (0..m).map(|_| finite_f32(rng)).collect(),
            class_id: rng.random_range(0..c as u32),
            subdomain_id: rng.random_range(0..k as u32),
            split: if rng.random() {
                Split::Train
            } else {
                Split::Test
            },
        })
        .collect();
    let mut manifest = DatasetManifest::new(m, c, k);
    manifest.source_tag = format!("fuzz {}", rng.random::<u32>());
    LatentDataset::new(manifest, records).unwrap()
}

fn bits(ds: &LatentDataset) -> Vec<(u32, u32, Split, Vec<u32>)> {
    ds.records()
        .iter()
        .map(|r| {
            (
                r.class_id,
                r.subdomain_id,
                r.split,
                r.vector.iter().map(|v| v.to_bits()).collect(),
            )
        })
        .collect()
}

/// Write and read back; `Err` describes the first difference.
pub fn round_trip(ds: &LatentDataset, dir: &Path, name: &str) -> Result<(), String> {
    let path = dir.join(format!("{name}.geld"));
    write_dataset(ds, &path).map_err(|e| e.to_string())?;
    let back = read_dataset(&path).map_err(|e| e.to_string())?;
    if back.manifest() != ds.manifest() {
        return Err(format!("{name}: manifest changed"));
    }
    if bits(&back) != bits(ds) {
        return Err(format!("{name}: records changed"));
    }
    Ok(())
}

pub const CORRUPTIONS: usize = 12;

/// Apply corruption `kind` to a written dataset. Returns whether the
/// reader must answer with an integrity error (otherwise a format error).
pub fn corrupt(ds: &LatentDataset, path: &Path, kind: usize, rng: &mut impl Rng) -> bool {
    write_dataset(ds, path).unwrap();
    let mut bytes = std::fs::read(path).unwrap();
    let man = ds.manifest();
    let stride = 9 + 4 * man.m;
    let header = 28;
    let record = |rng: &mut dyn rand::RngCore| header + stride * rng.random_range(0..ds.len());
    let mut integrity = false;
    match kind {
        0 => bytes[rng.random_range(0..4)] ^= 1 << rng.random_range(0..8),
        1 => bytes[4..8].copy_from_slice(&rng.random_range(2u32..=u32::MAX).to_le_bytes()),
        2 => {
            let cut = rng.random_range(1..=stride.min(bytes.len() - header));
            bytes.truncate(bytes.len() - cut);
        }
        3 => bytes.extend((0..rng.random_range(1..=stride)).map(|_| rng.random::<u8>())),
        4 => {
            let at = record(rng) + 8;
            bytes[at] = rng.random_range(2..=255);
        }
        5 => {
            let at = record(rng);
            bytes[at..at + 4]
                .copy_from_slice(&rng.random_range(man.c as u32..=u32::MAX).to_le_bytes());
        }
        6 => {
            let at = record(rng) + 9 + 4 * rng.random_range(0..man.m);
            let bad = [f32::NAN, f32::INFINITY, f32::NEG_INFINITY][rng.random_range(0..3)];
            bytes[at..at + 4].copy_from_slice(&bad.to_le_bytes());
        }
        7 => {
            let n = ds.len() as u64 + rng.random_range(1..1000);
            bytes[20..28].copy_from_slice(&n.to_le_bytes());
        }
        8 => {
            let mut m = man.clone();
            let (c, k) = (rng.random_range(0..m.c), rng.random_range(0..m.k));
            m.histogram[c][k][rng.random_range(0..2)] += 1;
            write_manifest(path, &m);
            integrity = true;
        }
        9 => {
            let mut m = man.clone();
            m.m += rng.random_range(1..5);
            write_manifest(path, &m);
            integrity = true;
        }
        10 => {
            let text = std::fs::read_to_string(manifest_path(path)).unwrap();
            let cut = rng.random_range(0..text.len());
            std::fs::write(manifest_path(path), &text[..cut]).unwrap();
        }
        11 => bytes.truncate(rng.random_range(0..header)),
        _ => unreachable!(),
    }
    std::fs::write(path, bytes).unwrap();
    integrity
}

fn write_manifest(path: &Path, m: &DatasetManifest) {
    std::fs::write(manifest_path(path), serde_json::to_string(m).unwrap()).unwrap();
}

/// `Ok` when reading the corrupted file fails with the expected variant.
pub fn check_rejected(path: &Path, integrity: bool) -> Result<(), String> {
    match read_dataset(path) {
        Ok(_) => Err("corrupted file was accepted".into()),
        Err(Error::Integrity(_)) if integrity => Ok(()),
        Err(Error::Format(_)) if !integrity => Ok(()),
        Err(e) => Err(format!("unexpected error variant: {e}")),
    }
}

/// Metrics recomputed item by item, without a confusion matrix.
pub struct BruteMetrics {
    pub recall: Vec<Option<f64>>,
    pub precision: Vec<Option<f64>>,
    pub f1: Vec<Option<f64>>,
    pub ua: f64,
    pub wa: f64,
    pub macro_f1: f64,
    pub groups: [Option<f64>; 3],
}

pub fn brute_metrics(pred: &[usize], labels: &[usize], c: usize, train: &[u64]) -> BruteMetrics {
    let mut recall = vec![None; c];
    let mut precision = vec![None; c];
    let mut f1 = vec![None; c];
    for class in 0..c {
        let support = labels.iter().filter(|&&y| y == class).count();
        if support == 0 {
            continue;
        }
        let hits = pred
            .iter()
            .zip(labels)
            .filter(|(p, y)| **p == class && **y == class)
            .count();
        let predicted = pred.iter().filter(|&&p| p == class).count();
        let r = hits as f64 / support as f64 * 100.0;
        let p = if predicted == 0 {
            0.0
        } else {
            hits as f64 / predicted as f64 * 100.0
        };
        recall[class] = Some(r);
        precision[class] = Some(p);
        f1[class] = Some(if r + p > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        });
    }
    let avg = |v: &[Option<f64>]| {
        let present: Vec<f64> = v.iter().flatten().copied().collect();
        present.iter().sum::<f64>() / present.len() as f64
    };
    let group = |lo: u64, hi: u64| {
        let members: Vec<usize> = (0..labels.len())
            .filter(|&i| (lo..=hi).contains(&train[labels[i]]))
            .collect();
        if members.is_empty() {
            None
        } else {
            Some(
                members.iter().filter(|&&i| pred[i] == labels[i]).count() as f64
                    / members.len() as f64
                    * 100.0,
            )
        }
    };
    BruteMetrics {
        ua: avg(&recall),
        macro_f1: avg(&f1),
        wa: pred.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / labels.len() as f64
            * 100.0,
        recall,
        precision,
        f1,
        groups: [group(101, u64::MAX), group(20, 100), group(0, 19)],
    }
}

/// Largest absolute difference between a report and the brute-force values;
/// `None` if their presence pattern differs.
pub fn metrics_gap(r: &MetricsReport, b: &BruteMetrics) -> Option<f64> {
    let opt = |x: Option<f64>, y: Option<f64>| match (x, y) {
        (Some(x), Some(y)) => Some((x - y).abs()),
        (None, None) => Some(0.0),
        _ => None,
    };
    let mut worst = (r.ua - b.ua)
        .abs()
        .max((r.wa - b.wa).abs())
        .max((r.macro_f1 - b.macro_f1).abs());
    for (i, m) in r.per_class.iter().enumerate() {
        worst = worst
            .max(opt(m.recall, b.recall[i])?)
            .max(opt(m.precision, b.precision[i])?)
            .max(opt(m.f1, b.f1[i])?);
    }
    for (x, y) in [r.acc_many, r.acc_medium, r.acc_small]
        .into_iter()
        .zip(b.groups)
    {
        worst = worst.max(opt(x, y)?);
    }
    Some(worst)
}
