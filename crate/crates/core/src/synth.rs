//! Synthetic heavy-tailed count data and a two-parameter benchmark trainer.
//!
//! Counts follow a discretized log-normal truncated at a cap. Each sample
//! carries one feature `z = y · (1 − b·y/cap) · (1 + ε)`, `ε ~ N(0, s²)`: a
//! noisy, increasingly under-reporting view of the true count. A linear
//! probe `ŷ = a·z + c` is trained three ways and evaluated per bin:
//!
//! 1. shuffled minibatches with plain absolute-error loss,
//! 2. round-robin bin-balanced minibatches with absolute error plus bin loss,
//! 3. random-bin minibatches with the same combined loss.

use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::counts::{CountRecord, DEFAULT_BETA};
use crate::error::{validation, Result};
use crate::eval::{evaluate, EvalReport, PredictionRecord};
use crate::loss::{bin_loss, bin_loss_subgradient, LossConfig};
use crate::rng;
use crate::sampling::{assign_by, plan_epoch, Scheme};
use crate::select::{bins_at_gamma, optimal_bins, split_records, GridSpec};
use crate::stratify::{Bin, LikelihoodKind, Partition};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSpec {
    pub n_samples: usize,
    /// Mean of the underlying normal on the log-count scale.
    pub log_mean: f64,
    /// Standard deviation on the log-count scale.
    pub log_sd: f64,
    pub max_count: u64,
    /// Multiplicative feature noise spread `s`.
    pub noise_spread: f64,
    /// Fractional under-reporting `b` of the feature at the cap.
    pub bias: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_samples: 1500,
            log_mean: 3.5,
            log_sd: 1.5,
            max_count: 2000,
            noise_spread: 0.1,
            bias: 0.6,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(validation("n_samples must be at least 1"));
        }
        if self.max_count == 0 {
            return Err(validation("max_count must be at least 1"));
        }
        if !(self.log_mean.is_finite() && self.log_sd.is_finite() && self.log_sd >= 0.0) {
            return Err(validation("log-scale parameters must be finite with log_sd >= 0"));
        }
        if !(self.noise_spread.is_finite() && self.noise_spread >= 0.0) {
            return Err(validation("noise_spread must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.bias) {
            return Err(validation("bias must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Draws `n_samples` records and their features; deterministic in `spec.seed`.
pub fn generate_dataset(spec: &SynthSpec) -> Result<(Vec<CountRecord>, Vec<f64>)> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed);
    let log_count = Normal::new(spec.log_mean, spec.log_sd).expect("validated");
    let noise = Normal::new(0.0, spec.noise_spread).expect("validated");
    let cap = spec.max_count as f64;

    let width = spec.n_samples.to_string().len();
    let mut records = Vec::with_capacity(spec.n_samples);
    let mut features = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        // Truncation by rejection; round(exp(x)) <= cap has positive probability for any x-law.
        let y = loop {
            let c = log_count.sample(&mut rng).exp().round();
            if c <= cap {
                break c as u64;
            }
        };
        let eps = noise.sample(&mut rng);
        let yf = y as f64;
        let z = yf * (1.0 - spec.bias * yf / cap) * (1.0 + eps);
        records.push(CountRecord::new(format!("s{i:0width$}"), y));
        features.push(z);
    }
    Ok((records, features))
}

/// How the stratification used for training and evaluation is obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionConfig {
    /// Fixed γ; `None` runs the cross-validated grid search.
    pub gamma: Option<f64>,
    pub beta: u64,
    pub likelihood: LikelihoodKind,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            gamma: Some(0.5),
            beta: DEFAULT_BETA,
            likelihood: LikelihoodKind::Multinomial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainerConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossConfig,
    /// Held-out fraction for evaluation.
    pub holdout: f64,
    /// One full comparison per seed.
    pub seeds: Vec<u64>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.05,
            loss: LossConfig::default(),
            holdout: 0.2,
            seeds: (0..10).collect(),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(validation("epochs and batch_size must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(validation("learning_rate must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(validation("at least one seed is required"));
        }
        LossConfig::new(self.loss.lambda1, self.loss.lambda2)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingScheme {
    NoBinning,
    RrBinLoss,
    RsBinLoss,
}

impl TrainingScheme {
    pub const ALL: [TrainingScheme; 3] = [Self::NoBinning, Self::RrBinLoss, Self::RsBinLoss];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeResult {
    pub scheme: TrainingScheme,
    /// Fitted slope and intercept of `ŷ = a·z + c`.
    pub slope: f64,
    pub intercept: f64,
    /// Training objective at the end of each epoch (non-increasing).
    pub epoch_losses: Vec<f64>,
    /// Times each training sample was drawn, summed over epochs.
    #[serde(skip)]
    pub draws_per_sample: Vec<usize>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub n_bins: usize,
    pub schemes: Vec<SchemeResult>,
}

impl SeedRun {
    pub fn result(&self, scheme: TrainingScheme) -> &SchemeResult {
        self.schemes.iter().find(|r| r.scheme == scheme).expect("all schemes present")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WinCounts {
    /// Seeds where round robin had lower pooled std than no binning.
    pub rr: usize,
    pub rs: usize,
    /// Seeds where at least one bin-aware scheme won.
    pub either: usize,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub spec: SynthSpec,
    pub partition: PartitionConfig,
    pub trainer: TrainerConfig,
    pub seeds: Vec<u64>,
    pub runs: Vec<SeedRun>,
    pub wins: WinCounts,
}

/// Trains and evaluates all three schemes for every seed in `trainer.seeds`.
///
/// For seed `k` the dataset is generated with seed `k`, split with seed `k`,
/// and epoch plans use seeds derived from `k` and the epoch index.
pub fn run_comparison(
    spec: &SynthSpec,
    partition_cfg: &PartitionConfig,
    trainer: &TrainerConfig,
) -> Result<ComparisonReport> {
    spec.validate()?;
    trainer.validate()?;

    let runs = trainer
        .seeds
        .iter()
        .map(|&seed| run_seed(spec, partition_cfg, trainer, seed))
        .collect::<Result<Vec<_>>>()?;

    let beats = |run: &SeedRun, s: TrainingScheme| {
        run.result(s).report.pooled_std < run.result(TrainingScheme::NoBinning).report.pooled_std
    };
    let wins = WinCounts {
        rr: runs.iter().filter(|r| beats(r, TrainingScheme::RrBinLoss)).count(),
        rs: runs.iter().filter(|r| beats(r, TrainingScheme::RsBinLoss)).count(),
        either: runs
            .iter()
            .filter(|r| beats(r, TrainingScheme::RrBinLoss) || beats(r, TrainingScheme::RsBinLoss))
            .count(),
        seeds: runs.len(),
    };
    Ok(ComparisonReport {
        spec: spec.clone(),
        partition: partition_cfg.clone(),
        trainer: trainer.clone(),
        seeds: trainer.seeds.clone(),
        runs,
        wins,
    })
}

fn run_seed(
    spec: &SynthSpec,
    partition_cfg: &PartitionConfig,
    trainer: &TrainerConfig,
    seed: u64,
) -> Result<SeedRun> {
    let (records, features) = generate_dataset(&SynthSpec { seed, ..spec.clone() })?;
    let (train, test) = split_records(&records, trainer.holdout, seed)?;
    let partition = match partition_cfg.gamma {
        Some(gamma) => bins_at_gamma(&train, gamma, partition_cfg.beta, partition_cfg.likelihood)?,
        None => optimal_bins(
            &train,
            &GridSpec {
                beta: partition_cfg.beta,
                likelihood: partition_cfg.likelihood,
                ..GridSpec::default()
            },
        )?,
    };

    // Records are named s<index>; recover the feature row from the id.
    let index_of = |r: &CountRecord| -> usize { r.id[1..].parse().expect("generated id") };
    let to_samples = |set: &[CountRecord]| -> Vec<Sample> {
        set.iter()
            .map(|r| {
                let y = r.count;
                Sample {
                    y: y as f64,
                    z: features[index_of(r)],
                    bin: partition.bin_for(y),
                }
            })
            .collect()
    };
    let train_samples = to_samples(&train);
    let test_samples = to_samples(&test);

    let schemes = TrainingScheme::ALL
        .iter()
        .map(|&scheme| {
            let fit = train_scheme(scheme, &train_samples, &partition, trainer, seed)?;
            let preds: Vec<PredictionRecord> = test
                .iter()
                .zip(&test_samples)
                .map(|(r, s)| PredictionRecord::new(r.id.clone(), r.count, fit.predict(s.z)))
                .collect();
            Ok(SchemeResult {
                scheme,
                slope: fit.slope(),
                intercept: fit.intercept(),
                epoch_losses: fit.epoch_losses,
                draws_per_sample: fit.draws,
                report: evaluate(&preds, &partition)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SeedRun {
        seed,
        n_bins: partition.n_bins(),
        schemes,
    })
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    y: f64,
    z: f64,
    bin: Bin,
}

/// `ŷ = scale · (w · z/scale + v)`; the scale keeps both parameters O(1).
#[derive(Debug, Clone)]
struct LinearProbe {
    scale: f64,
    w: f64,
    v: f64,
    epoch_losses: Vec<f64>,
    draws: Vec<usize>,
}

impl LinearProbe {
    fn predict(&self, z: f64) -> f64 {
        self.w * z + self.scale * self.v
    }

    fn slope(&self) -> f64 {
        self.w
    }

    fn intercept(&self) -> f64 {
        self.scale * self.v
    }
}

/// Per-sample objective and its derivative in `ŷ` for a scheme.
fn sample_loss(scheme: TrainingScheme, s: &Sample, y_hat: f64, cfg: &LossConfig) -> (f64, f64) {
    let base = (s.y - y_hat).abs();
    let base_grad = if y_hat > s.y {
        1.0
    } else if y_hat < s.y {
        -1.0
    } else {
        0.0
    };
    match scheme {
        TrainingScheme::NoBinning => (base, base_grad),
        TrainingScheme::RrBinLoss | TrainingScheme::RsBinLoss => {
            let l = bin_loss(s.y, y_hat, s.bin, cfg.lambda1).expect("sample lies in its bin");
            let g = bin_loss_subgradient(s.y, y_hat, s.bin, cfg.lambda1).expect("sample lies in its bin");
            (base + cfg.lambda2 * l, base_grad + cfg.lambda2 * g)
        }
    }
}

fn objective(scheme: TrainingScheme, samples: &[Sample], probe: &LinearProbe, cfg: &LossConfig) -> f64 {
    samples
        .iter()
        .map(|s| sample_loss(scheme, s, probe.predict(s.z), cfg).0)
        .sum::<f64>()
        / samples.len() as f64
}

/// Minibatch subgradient descent. An epoch whose end-of-epoch objective is
/// worse than the previous one is rolled back and the step size halved, so
/// recorded epoch losses never increase.
fn train_scheme(
    scheme: TrainingScheme,
    samples: &[Sample],
    partition: &Partition,
    trainer: &TrainerConfig,
    seed: u64,
) -> Result<LinearProbe> {
    let scale = samples.iter().map(|s| s.z.abs()).sum::<f64>() / samples.len() as f64;
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut probe = LinearProbe {
        scale,
        w: 0.0,
        v: 0.0,
        epoch_losses: Vec::with_capacity(trainer.epochs),
        draws: vec![0; samples.len()],
    };
    let cfg = &trainer.loss;
    let mut lr = trainer.learning_rate;
    let mut previous = objective(scheme, samples, &probe, cfg);

    let assignment = assign_by(
        samples.iter().enumerate().map(|(i, s)| (i, s.y as u64)),
        partition,
    );

    for epoch in 0..trainer.epochs {
        let plan_seed = seed.wrapping_mul(1_000_003).wrapping_add(epoch as u64);
        let batches: Vec<Vec<usize>> = match scheme {
            TrainingScheme::NoBinning => {
                let mut order: Vec<usize> = (0..samples.len()).collect();
                rng::shuffle(&mut rng::seeded(plan_seed), &mut order);
                order.chunks(trainer.batch_size).map(<[usize]>::to_vec).collect()
            }
            TrainingScheme::RrBinLoss => plan_epoch(&assignment, Scheme::Rr, trainer.batch_size, plan_seed)?.batches,
            TrainingScheme::RsBinLoss => plan_epoch(&assignment, Scheme::Rs, trainer.batch_size, plan_seed)?.batches,
        };

        let (w0, v0) = (probe.w, probe.v);
        for batch in &batches {
            let (mut gw, mut gv) = (0.0, 0.0);
            for &i in batch {
                probe.draws[i] += 1;
                let s = &samples[i];
                let (_, g) = sample_loss(scheme, s, probe.predict(s.z), cfg);
                gw += g * s.z / scale;
                gv += g;
            }
            let n = batch.len() as f64;
            probe.w -= lr * gw / n;
            probe.v -= lr * gv / n;
        }

        let current = objective(scheme, samples, &probe, cfg);
        if current > previous {
            probe.w = w0;
            probe.v = v0;
            lr *= 0.5;
        } else {
            previous = current;
        }
        probe.epoch_losses.push(previous);
    }
    Ok(probe)
}
