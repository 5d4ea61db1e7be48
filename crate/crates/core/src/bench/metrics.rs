use std::fmt::Write as _;

use crate::numkit::Weights;
use crate::{Error, Result};

/// Schema tag written as the first line of every metrics CSV.
pub const CSV_SCHEMA: &str = "# fednoise-v1";

pub const CSV_COLUMNS: [&str; 9] = [
    "round",
    "test_accuracy",
    "mean_train_loss",
    "confident_fraction",
    "mask_precision",
    "mask_recall",
    "weight_divergence",
    "r_t",
    "wall_ms",
];

/// One row of the per-round metrics stream.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub round: usize,
    pub test_accuracy: f64,
    pub mean_train_loss: f64,
    pub confident_fraction: f64,
    pub mask_precision: f64,
    pub mask_recall: f64,
    pub weight_divergence: f64,
    /// Small-loss keep ratio used during the round.
    pub r_t: f64,
    /// Wall time of the round; 0 unless timing is recorded.
    pub wall_ms: u64,
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.round,
            self.test_accuracy,
            self.mean_train_loss,
            self.confident_fraction,
            self.mask_precision,
            self.mask_recall,
            self.weight_divergence,
            self.r_t,
            self.wall_ms
        )
    }
}

/// Render the schema line, header and one line per record.
pub fn to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CSV_SCHEMA}");
    let _ = writeln!(out, "{}", CSV_COLUMNS.join(","));
    for r in records {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

/// Mean test accuracy over the last `window` rounds (all rounds if fewer).
pub fn tail_mean_accuracy(records: &[MetricsRecord], window: usize) -> f64 {
    tail_mean(records, window, |r| r.test_accuracy)
}

pub fn tail_mean(
    records: &[MetricsRecord],
    window: usize,
    f: impl Fn(&MetricsRecord) -> f64,
) -> f64 {
    let tail = &records[records.len().saturating_sub(window)..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().map(f).sum::<f64>() / tail.len() as f64
}

/// Noisy-label detection quality of a confident mask.
///
/// Samples with mask `false` are the detected-noisy set; samples whose given
/// label differs from the true label are the actually-noisy set. Precision is
/// 1 when nothing is detected and recall is 1 when nothing is noisy.
pub fn detection_metrics(mask: &[bool], given: &[usize], truth: &[usize]) -> Result<(f64, f64)> {
    if mask.len() != given.len() || given.len() != truth.len() {
        return Err(Error::contract("detection metrics need aligned inputs"));
    }
    let mut detected = 0usize;
    let mut noisy = 0usize;
    let mut hit = 0usize;
    for ((&m, &y), &t) in mask.iter().zip(given).zip(truth) {
        let is_noisy = y != t;
        detected += usize::from(!m);
        noisy += usize::from(is_noisy);
        hit += usize::from(!m && is_noisy);
    }
    let precision = if detected == 0 {
        1.0
    } else {
        hit as f64 / detected as f64
    };
    let recall = if noisy == 0 {
        1.0
    } else {
        hit as f64 / noisy as f64
    };
    Ok((precision, recall))
}

/// Mean pairwise Euclidean distance between client parameter vectors,
/// divided by their mean norm.
pub fn weight_divergence(params: &[&Weights]) -> Result<f64> {
    if params.len() < 2 {
        return Err(Error::contract(
            "weight divergence needs at least two clients",
        ));
    }
    let flat: Vec<Vec<f64>> = params.iter().map(|w| w.to_flat()).collect();
    if flat.iter().any(|f| f.len() != flat[0].len()) {
        return Err(Error::contract("client parameter shapes differ"));
    }
    let mut dist_sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..flat.len() {
        for j in i + 1..flat.len() {
            let d: f64 = flat[i]
                .iter()
                .zip(&flat[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            dist_sum += d;
            pairs += 1;
        }
    }
    let mean_norm = flat.iter().map(|f| crate::numkit::norm(f)).sum::<f64>() / flat.len() as f64;
    if mean_norm == 0.0 {
        return Ok(0.0);
    }
    Ok(dist_sum / pairs as f64 / mean_norm)
}
