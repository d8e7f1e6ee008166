//! Recognition metrics and the intra-class compactness diagnostic.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Train-count thresholds of the many / medium / small groups.
pub const MANY_ABOVE: u64 = 100;
pub const SMALL_BELOW: u64 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: usize,
    /// Test items whose true label is this class.
    pub support: u64,
    /// Percentages; `None` when the class is absent from the test labels.
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: u64,
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassMetrics>,
    pub ua: f64,
    pub wa: f64,
    pub macro_f1: f64,
    pub excluded_class: Option<usize>,
    pub ua_wo_excluded: Option<f64>,
    pub acc_many: Option<f64>,
    pub acc_medium: Option<f64>,
    pub acc_small: Option<f64>,
}

fn pct(num: u64, den: u64) -> f64 {
    100.0 * num as f64 / den as f64
}

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = v
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Metrics over `num_classes` classes. `train_counts` (per class, after
/// scenario application) enables the group accuracies.
pub fn compute_metrics(
    predictions: &[usize],
    labels: &[usize],
    num_classes: usize,
    train_counts: Option<&[u64]>,
    excluded_class: Option<usize>,
) -> Result<MetricsReport> {
    if predictions.len() != labels.len() {
        return Err(Error::dims("predictions", labels.len(), predictions.len()));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("no test items to score".into()));
    }
    if let Some(&bad) = predictions
        .iter()
        .chain(labels)
        .find(|&&c| c >= num_classes)
    {
        return Err(Error::dims("class id bound", num_classes, bad + 1));
    }
    if let Some(t) = train_counts {
        if t.len() != num_classes {
            return Err(Error::dims("train histogram", num_classes, t.len()));
        }
    }
    let mut confusion = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        confusion[y][p] += 1;
    }
    let per_class: Vec<ClassMetrics> = (0..num_classes)
        .map(|c| {
            let support: u64 = confusion[c].iter().sum();
            let tp = confusion[c][c];
            let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
            if support == 0 {
                return ClassMetrics {
                    class_id: c,
                    support,
                    recall: None,
                    precision: None,
                    f1: None,
                };
            }
            let recall = pct(tp, support);
            let precision = if predicted == 0 {
                0.0
            } else {
                pct(tp, predicted)
            };
            let f1 = if recall + precision == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                class_id: c,
                support,
                recall: Some(recall),
                precision: Some(precision),
                f1: Some(f1),
            }
        })
        .collect();
    let n = labels.len() as u64;
    let ua = mean(per_class.iter().filter_map(|m| m.recall)).unwrap_or(0.0);
    let macro_f1 = mean(per_class.iter().filter_map(|m| m.f1)).unwrap_or(0.0);
    let correct: u64 = (0..num_classes).map(|c| confusion[c][c]).sum();
    let wa = pct(correct, n);
    let ua_wo_excluded = excluded_class.and_then(|e| {
        mean(
            per_class
                .iter()
                .filter(|m| m.class_id != e)
                .filter_map(|m| m.recall),
        )
    });
    let group = |keep: &dyn Fn(u64) -> bool| {
        let counts = train_counts?;
        let (hit, total) = (0..num_classes)
            .filter(|&c| keep(counts[c]))
            .fold((0, 0), |(h, t), c| {
                (h + confusion[c][c], t + per_class[c].support)
            });
        (total > 0).then(|| pct(hit, total))
    };
    let acc_many = group(&|c| c > MANY_ABOVE);
    let acc_medium = group(&|c| (SMALL_BELOW..=MANY_ABOVE).contains(&c));
    let acc_small = group(&|c| c < SMALL_BELOW);
    Ok(MetricsReport {
        n,
        confusion,
        per_class,
        ua,
        wa,
        macro_f1,
        excluded_class,
        ua_wo_excluded,
        acc_many,
        acc_medium,
        acc_small,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.2}")).unwrap_or_default()
}

/// Per-class rows followed by one summary row, percentages to 2 decimals.
pub fn metrics_csv(report: &MetricsReport) -> String {
    let mut out = String::from("class,recall,precision,f1\n");
    for m in &report.per_class {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            m.class_id,
            cell(m.recall),
            cell(m.precision),
            cell(m.f1)
        );
    }
    out.push_str("ua,wa,macro_f1,ua_wo_excluded,acc_many,acc_medium,acc_small\n");
    let _ = writeln!(
        out,
        "{:.2},{:.2},{:.2},{},{},{},{}",
        report.ua,
        report.wa,
        report.macro_f1,
        cell(report.ua_wo_excluded),
        cell(report.acc_many),
        cell(report.acc_medium),
        cell(report.acc_small)
    );
    out
}

fn mean_intra_class_distance<V: AsRef<[f32]>>(vectors: &[V], labels: &[usize]) -> Result<f64> {
    let (mut sum, mut pairs) = (0.0f64, 0u64);
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            if labels[i] != labels[j] {
                continue;
            }
            let (a, b) = (vectors[i].as_ref(), vectors[j].as_ref());
            if a.len() != b.len() {
                return Err(Error::dims("vector width", a.len(), b.len()));
            }
            let d2: f64 = a
                .iter()
                .zip(b)
                .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
                .sum();
            sum += d2.sqrt();
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// Mean same-class pairwise Euclidean distance in `space_b` over that in
/// `space_a`. Rows of the two spaces are the same items.
pub fn compactness_ratio<A: AsRef<[f32]>, B: AsRef<[f32]>>(
    space_a: &[A],
    space_b: &[B],
    labels: &[usize],
) -> Result<f64> {
    if space_a.len() != labels.len() || space_b.len() != labels.len() {
        return Err(Error::dims(
            "compactness sample count",
            labels.len(),
            space_a.len().min(space_b.len()),
        ));
    }
    let mut counts = std::collections::BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    if let Some((c, _)) = counts.iter().find(|(_, &n)| n < 2) {
        return Err(Error::InsufficientSupport(format!(
            "class {c} has a single sample"
        )));
    }
    let a = mean_intra_class_distance(space_a, labels)?;
    let b = mean_intra_class_distance(space_b, labels)?;
    if a == 0.0 {
        return Err(Error::Numerical(
            "space_a has zero intra-class spread".into(),
        ));
    }
    Ok(b / a)
}
