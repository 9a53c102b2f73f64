//! Per-bin and pooled error statistics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::counts::{csv_error, parse_count};
use crate::error::{validation, Error, Result};
use crate::stratify::{Bin, Partition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub y: u64,
    pub y_hat: f64,
}

impl PredictionRecord {
    pub fn new(id: impl Into<String>, y: u64, y_hat: f64) -> Self {
        Self {
            id: id.into(),
            y,
            y_hat,
        }
    }

    pub fn abs_error(&self) -> f64 {
        (self.y as f64 - self.y_hat).abs()
    }
}

/// Parses CSV text with the header `id,count_true,count_pred`.
pub fn ingest_predictions(text: &str) -> Result<Vec<PredictionRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = reader.records();
    match rows.next() {
        Some(Ok(h)) if h.iter().eq(["id", "count_true", "count_pred"]) => {}
        Some(Err(e)) => return Err(csv_error(e)),
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "expected header `id,count_true,count_pred`".into(),
            })
        }
    }
    let mut out = Vec::new();
    for row in rows {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", row.len()),
            });
        }
        let y = parse_count(&row[1], line)?;
        let y_hat: f64 = row[2].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("`{}` is not a number", &row[2]),
        })?;
        if !y_hat.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("prediction `{}` is not finite", &row[2]),
            });
        }
        out.push(PredictionRecord::new(&row[0], y, y_hat));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub lo: u64,
    pub hi: u64,
    pub n: usize,
    /// `None` for an empty bin.
    pub mae: Option<f64>,
    pub std: Option<f64>,
}

impl BinStats {
    pub fn bin(&self) -> Bin {
        Bin {
            lo: self.lo,
            hi: self.hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_bin: Vec<BinStats>,
    pub pooled_mae: f64,
    pub pooled_std: f64,
    pub global_mae: f64,
    pub global_std: f64,
    pub n_total: usize,
}

/// Mean and population standard deviation, two-pass.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Absolute-error mean and population std per bin; records are routed by
/// ground truth, clamping counts above the range into the last bin.
pub fn per_bin_stats(preds: &[PredictionRecord], partition: &Partition) -> Vec<BinStats> {
    let mut errors = vec![Vec::new(); partition.n_bins()];
    for p in preds {
        errors[partition.locate(p.y).0].push(p.abs_error());
    }
    partition
        .bins
        .iter()
        .zip(errors)
        .map(|(bin, errs)| {
            let (mae, std) = if errs.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&errs);
                (Some(m), Some(s))
            };
            BinStats {
                lo: bin.lo,
                hi: bin.hi,
                n: errs.len(),
                mae,
                std,
            }
        })
        .collect()
}

/// Sample-weighted pooled mean and standard deviation of per-bin statistics.
///
/// `σ²_pool = Σ nᵢσᵢ² / Σ nᵢ` has no between-bin term. Empty bins are skipped.
pub fn pool(stats: &[BinStats]) -> Result<(f64, f64)> {
    let mut n_total = 0.0;
    let mut mean_acc = 0.0;
    let mut var_acc = 0.0;
    for s in stats.iter().filter(|s| s.n > 0) {
        let (Some(mae), Some(std)) = (s.mae, s.std) else {
            return Err(validation(format!("bin [{}, {}] has samples but no statistics", s.lo, s.hi)));
        };
        let n = s.n as f64;
        n_total += n;
        mean_acc += n * mae;
        var_acc += n * std * std;
    }
    if n_total == 0.0 {
        return Err(Error::Empty("no non-empty bins to pool"));
    }
    Ok((mean_acc / n_total, (var_acc / n_total).sqrt()))
}

/// Mean and population std of all absolute errors, ignoring bins.
pub fn global_stats(preds: &[PredictionRecord]) -> Result<(f64, f64)> {
    if preds.is_empty() {
        return Err(Error::Empty("no predictions to evaluate"));
    }
    let errs: Vec<f64> = preds.iter().map(PredictionRecord::abs_error).collect();
    Ok(mean_std(&errs))
}

pub fn evaluate(preds: &[PredictionRecord], partition: &Partition) -> Result<EvalReport> {
    let (global_mae, global_std) = global_stats(preds)?;
    let per_bin = per_bin_stats(preds, partition);
    let (pooled_mae, pooled_std) = pool(&per_bin)?;
    Ok(EvalReport {
        per_bin,
        pooled_mae,
        pooled_std,
        global_mae,
        global_std,
        n_total: preds.len(),
    })
}

/// Plot-ready CSV: one row per bin, then `pooled` and `global` trailer rows.
/// Empty bins leave `mae` and `std` blank.
pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::from("bin_lo,bin_hi,n,mae,std\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in &report.per_bin {
        let _ = writeln!(out, "{},{},{},{},{}", s.lo, s.hi, s.n, opt(s.mae), opt(s.std));
    }
    let _ = writeln!(out, "pooled,,{},{},{}", report.n_total, report.pooled_mae, report.pooled_std);
    let _ = writeln!(out, "global,,{},{},{}", report.n_total, report.global_mae, report.global_std);
    out
}
