//! Browser bindings for the demo page in `www/`.
//!
//! Each export takes plain strings and numbers and returns a JSON string.
//! The `*_json` functions hold the logic so it can be tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use countstrata::loss::{bin_loss, combined_loss};
use countstrata::sampling::{assign_bins, plan_epoch};
use countstrata::select::{bins_at_gamma, optimal_bins_with_selection};
use countstrata::{build_histogram, ingest_counts, Bin, GridSpec, LikelihoodKind, LossConfig, Partition, Scheme};

#[derive(Serialize)]
struct Binned {
    partition: Partition,
    /// Unsmoothed frequency of every count value.
    freqs: Vec<u64>,
    /// Present when γ was picked by grid search.
    gamma_best: Option<f64>,
}

/// Bins a counts CSV. `gamma <= 0` runs the grid search (with `n_seeds` splits).
pub fn partition_json(csv: &str, gamma: f64, beta: u64, likelihood: &str, n_seeds: usize) -> Result<String, String> {
    let records = ingest_counts(csv).map_err(|e| e.to_string())?;
    let kind: LikelihoodKind = likelihood.parse().map_err(|e: countstrata::Error| e.to_string())?;
    let (partition, gamma_best) = if gamma > 0.0 {
        (bins_at_gamma(&records, gamma, beta, kind).map_err(|e| e.to_string())?, None)
    } else {
        let spec = GridSpec { n_seeds, beta, likelihood: kind, ..GridSpec::default() };
        let (p, sel) = optimal_bins_with_selection(&records, &spec).map_err(|e| e.to_string())?;
        (p, Some(sel.gamma_best))
    };
    let freqs = build_histogram(&records, None).map_err(|e| e.to_string())?.freqs().to_vec();
    serde_json::to_string(&Binned { partition, freqs, gamma_best }).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Curve {
    y_hat: Vec<f64>,
    bin_loss: Vec<f64>,
    /// `|y − ŷ| + λ2 · bin_loss`, i.e. the bin loss added to an absolute-error model loss.
    combined: Vec<f64>,
}

/// Samples the bin loss for ground truth `y` in `[lo, hi]` over `ŷ ∈ [from, to]`.
#[allow(clippy::too_many_arguments)]
pub fn loss_curve_json(
    y: f64,
    lo: u64,
    hi: u64,
    lambda1: f64,
    lambda2: f64,
    from: f64,
    to: f64,
    steps: usize,
) -> Result<String, String> {
    let bin = Bin::new(lo, hi).map_err(|e| e.to_string())?;
    let cfg = LossConfig::new(lambda1, lambda2).map_err(|e| e.to_string())?;
    if steps < 2 || !(from.is_finite() && to.is_finite() && from < to) {
        return Err("need at least 2 steps over a non-empty range".into());
    }
    let mut curve = Curve { y_hat: Vec::with_capacity(steps), bin_loss: Vec::new(), combined: Vec::new() };
    for i in 0..steps {
        let y_hat = from + (to - from) * i as f64 / (steps - 1) as f64;
        let l = bin_loss(y, y_hat, bin, cfg.lambda1).map_err(|e| e.to_string())?;
        curve.y_hat.push(y_hat);
        curve.bin_loss.push(l);
        curve.combined.push(combined_loss((y - y_hat).abs(), y, y_hat, bin, &cfg).map_err(|e| e.to_string())?);
    }
    serde_json::to_string(&curve).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Planned {
    /// Bin index of every draw, batch by batch.
    batches: Vec<Vec<usize>>,
    ids: Vec<Vec<String>>,
    bin_sizes: Vec<usize>,
}

/// One epoch plan for a counts CSV under a partition JSON.
pub fn plan_json(csv: &str, partition: &str, scheme: &str, batch_size: usize, seed: u64) -> Result<String, String> {
    let records = ingest_counts(csv).map_err(|e| e.to_string())?;
    let partition: Partition = serde_json::from_str(partition).map_err(|e| e.to_string())?;
    let scheme: Scheme = scheme.parse().map_err(|e: countstrata::Error| e.to_string())?;
    let assignment = assign_bins(&records, &partition);
    let plan = plan_epoch(&assignment, scheme, batch_size, seed).map_err(|e| e.to_string())?;
    let bin_of: std::collections::HashMap<&str, usize> = assignment
        .bins
        .iter()
        .enumerate()
        .flat_map(|(k, ids)| ids.iter().map(move |id| (id.as_str(), k)))
        .collect();
    let planned = Planned {
        batches: plan.batches.iter().map(|b| b.iter().map(|id| bin_of[id.as_str()]).collect()).collect(),
        bin_sizes: assignment.bins.iter().map(Vec::len).collect(),
        ids: plan.batches,
    };
    serde_json::to_string(&planned).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn partition(csv: &str, gamma: f64, beta: u32, likelihood: &str, n_seeds: u32) -> Result<String, JsError> {
    partition_json(csv, gamma, beta.into(), likelihood, n_seeds as usize).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn loss_curve(
    y: f64,
    lo: u32,
    hi: u32,
    lambda1: f64,
    lambda2: f64,
    from: f64,
    to: f64,
    steps: u32,
) -> Result<String, JsError> {
    loss_curve_json(y, lo.into(), hi.into(), lambda1, lambda2, from, to, steps as usize).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn plan(csv: &str, partition: &str, scheme: &str, batch_size: u32, seed: u32) -> Result<String, JsError> {
    plan_json(csv, partition, scheme, batch_size as usize, seed.into()).map_err(|e| JsError::new(&e))
}
