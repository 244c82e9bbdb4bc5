//! Depth evaluation metrics.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::ScalarGrid;

/// Error and accuracy statistics over the evaluation mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub rmse: f64,
    pub mae: f64,
    pub absrel: f64,
    pub sqrel: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub silog: f64,
    pub valid_count: usize,
    /// Masked pixels with a non-positive prediction.
    pub clamped: usize,
}

const FIELDS: [&str; 10] = [
    "rmse",
    "mae",
    "absrel",
    "sqrel",
    "delta1",
    "delta2",
    "delta3",
    "silog",
    "valid_count",
    "clamped",
];

impl MetricReport {
    fn values(&self) -> [String; 10] {
        [
            self.rmse.to_string(),
            self.mae.to_string(),
            self.absrel.to_string(),
            self.sqrel.to_string(),
            self.delta1.to_string(),
            self.delta2.to_string(),
            self.delta3.to_string(),
            self.silog.to_string(),
            self.valid_count.to_string(),
            self.clamped.to_string(),
        ]
    }

    /// One `key=value` line per field.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for (k, v) in FIELDS.iter().zip(self.values()) {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn csv_header() -> String {
        FIELDS.join(",")
    }

    pub fn to_csv_row(&self) -> String {
        self.values().join(",")
    }
}

/// Compare `pred` against `gt` on pixels where both are valid and
/// `gt ∈ (min_depth, max_depth]`.
///
/// Non-positive predictions fail every δ threshold and are clamped to
/// `min_depth` inside the log metric.
pub fn evaluate(
    pred: &ScalarGrid,
    gt: &ScalarGrid,
    min_depth: f64,
    max_depth: f64,
) -> Result<MetricReport> {
    if !pred.same_shape(gt) {
        return Err(Error::ShapeMismatch(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    if !(min_depth.is_finite() && min_depth >= 0.0 && max_depth > min_depth) {
        return Err(Error::InvalidInput(format!(
            "invalid depth range ({min_depth}, {max_depth}]"
        )));
    }
    let log_floor = min_depth.max(f64::MIN_POSITIVE);
    let mut n = 0usize;
    let mut clamped = 0usize;
    let (mut se, mut ae, mut rel, mut sqrel) = (0.0, 0.0, 0.0, 0.0);
    let mut hits = [0usize; 3];
    let mut log_err = Vec::new();
    for i in 0..gt.len() {
        if !(gt.valid_mask()[i] && pred.valid_mask()[i]) {
            continue;
        }
        let g = gt.values()[i];
        if !(g > min_depth && g <= max_depth) {
            continue;
        }
        let p = pred.values()[i];
        n += 1;
        let diff = p - g;
        se += diff * diff;
        ae += diff.abs();
        rel += diff.abs() / g;
        sqrel += diff * diff / g;
        if p > 0.0 {
            let ratio = (p / g).max(g / p);
            let mut thr = 1.25;
            for hit in &mut hits {
                if ratio < thr {
                    *hit += 1;
                }
                thr *= 1.25;
            }
            log_err.push(p.ln() - g.ln());
        } else {
            clamped += 1;
            log_err.push(log_floor.ln() - g.ln());
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let nf = n as f64;
    let mean_e = log_err.iter().sum::<f64>() / nf;
    let var = log_err.iter().map(|e| (e - mean_e) * (e - mean_e)).sum::<f64>() / nf;
    Ok(MetricReport {
        rmse: (se / nf).sqrt(),
        mae: ae / nf,
        absrel: rel / nf,
        sqrel: sqrel / nf,
        delta1: hits[0] as f64 / nf,
        delta2: hits[1] as f64 / nf,
        delta3: hits[2] as f64 / nf,
        silog: var.max(0.0).sqrt(),
        valid_count: n,
        clamped,
    })
}
