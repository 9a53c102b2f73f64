//! MAP-optimal partitioning of a count range into contiguous bins.
//!
//! A partition is scored by the sum of its per-bin log-likelihoods plus a
//! truncated geometric log-prior on the number of bins. [`optimal_partition`]
//! finds the maximizer by dynamic programming over the histogram's occupied
//! cells; [`brute_force_partition`] enumerates every candidate and serves as
//! the reference for small inputs.

mod likelihood;
mod optimize;

use serde::{Deserialize, Serialize};

use crate::counts::CountHistogram;
use crate::error::{validation, Error, Result};

pub use likelihood::{bin_log_likelihood, ln_factorial, LikelihoodKind};
pub(crate) use likelihood::PrefixScores;
pub use optimize::{brute_force_partition, optimal_partition, BRUTE_FORCE_MAX_CELLS};

/// Inclusive count range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bin {
    pub lo: u64,
    pub hi: u64,
}

impl Bin {
    pub fn new(lo: u64, hi: u64) -> Result<Self> {
        if lo > hi {
            return Err(validation(format!("bin lower bound {lo} exceeds upper bound {hi}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> u64 {
        self.hi - self.lo + 1
    }

    pub fn contains(&self, count: u64) -> bool {
        self.lo <= count && count <= self.hi
    }

    /// Closed real-interval membership, used for predicted counts.
    pub fn contains_real(&self, value: f64) -> bool {
        self.lo as f64 <= value && value <= self.hi as f64
    }
}

/// Geometric prior on the number of bins, truncated at `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConfig {
    gamma: f64,
    alpha: Option<usize>,
}

impl PriorConfig {
    /// Prior with no effective cap: `alpha` resolves to the number of cells.
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(validation(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        Ok(Self { gamma, alpha: None })
    }

    pub fn with_alpha(mut self, alpha: usize) -> Result<Self> {
        if alpha == 0 {
            return Err(validation("alpha must be at least 1"));
        }
        self.alpha = Some(alpha);
        Ok(self)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> Option<usize> {
        self.alpha
    }

    /// Effective cap for a histogram with `cells` occupied cells.
    pub fn resolve_alpha(&self, cells: usize) -> usize {
        self.alpha.unwrap_or(cells.max(1))
    }
}

/// `ln P(n_bins)` under the truncated geometric prior
/// `P(n) = (1-γ)/(1-γ^α) · γ^n` for `1 ≤ n ≤ α`, and `-∞` outside that support.
pub fn prior_log_prob(n_bins: usize, gamma: f64, alpha: usize) -> f64 {
    if n_bins == 0 || n_bins > alpha {
        return f64::NEG_INFINITY;
    }
    log_normalizer(gamma, alpha) + n_bins as f64 * gamma.ln()
}

fn log_normalizer(gamma: f64, alpha: usize) -> f64 {
    let tail = gamma.powf(alpha as f64);
    (1.0 - gamma).ln() - (-tail).ln_1p()
}

/// An ordered, contiguous, exhaustive set of bins over `[0, C]` and its MAP score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PartitionRaw")]
pub struct Partition {
    pub gamma: f64,
    pub alpha: usize,
    pub beta: u64,
    pub likelihood: LikelihoodKind,
    pub map_score: f64,
    pub bins: Vec<Bin>,
}

#[derive(Deserialize)]
struct PartitionRaw {
    gamma: f64,
    alpha: usize,
    beta: u64,
    likelihood: LikelihoodKind,
    map_score: f64,
    bins: Vec<Bin>,
}

impl TryFrom<PartitionRaw> for Partition {
    type Error = Error;

    fn try_from(raw: PartitionRaw) -> Result<Self> {
        check_bins(&raw.bins)?;
        Ok(Partition {
            gamma: raw.gamma,
            alpha: raw.alpha,
            beta: raw.beta,
            likelihood: raw.likelihood,
            map_score: raw.map_score,
            bins: raw.bins,
        })
    }
}

/// Checks that bins start at 0, are non-empty and contiguous.
pub fn check_bins(bins: &[Bin]) -> Result<()> {
    let first = bins.first().ok_or_else(|| validation("a partition needs at least one bin"))?;
    if first.lo != 0 {
        return Err(validation(format!("first bin starts at {}, expected 0", first.lo)));
    }
    for (k, b) in bins.iter().enumerate() {
        if b.lo > b.hi {
            return Err(validation(format!("bin {k} has lo {} > hi {}", b.lo, b.hi)));
        }
        if k > 0 && b.lo != bins[k - 1].hi + 1 {
            return Err(validation(format!(
                "bin {k} starts at {}, expected {} for contiguity",
                b.lo,
                bins[k - 1].hi + 1
            )));
        }
    }
    Ok(())
}

impl Partition {
    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn max_count(&self) -> u64 {
        self.bins.last().map_or(0, |b| b.hi)
    }

    /// Index of the bin containing `count`; counts above the range land in
    /// the last bin and are reported as clamped.
    pub fn locate(&self, count: u64) -> (usize, bool) {
        if count > self.max_count() {
            return (self.bins.len() - 1, true);
        }
        let k = self.bins.partition_point(|b| b.hi < count);
        (k, false)
    }

    /// The bin containing `count` after clamping.
    pub fn bin_for(&self, count: u64) -> Bin {
        self.bins[self.locate(count).0]
    }
}

/// Log-likelihood sum over `bins` plus the log-prior on their number.
pub fn partition_log_score(
    hist: &CountHistogram,
    bins: &[Bin],
    prior: &PriorConfig,
    kind: LikelihoodKind,
) -> Result<f64> {
    check_bins(bins)?;
    let last = bins.last().expect("checked non-empty");
    if last.hi != hist.max_count() {
        return Err(validation(format!(
            "partition ends at {}, histogram range ends at {}",
            last.hi,
            hist.max_count()
        )));
    }
    let alpha = prior.resolve_alpha(hist.occupied().len());
    let prior_term = prior_log_prob(bins.len(), prior.gamma(), alpha);
    if prior_term == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let mut lik = 0.0;
    for b in bins {
        lik += bin_log_likelihood(hist, b.lo, b.hi, kind)?;
    }
    Ok(lik + prior_term)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::LN_2;

    #[test]
    fn prior_values() {
        assert_abs_diff_eq!(prior_log_prob(1, 0.5, 2), (1.0f64 / 3.0).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(prior_log_prob(2, 0.5, 2), (1.0f64 / 6.0).ln(), epsilon = 1e-12);
        assert_eq!(prior_log_prob(3, 0.5, 2), f64::NEG_INFINITY);
        assert_eq!(prior_log_prob(0, 0.5, 2), f64::NEG_INFINITY);
    }

    #[test]
    fn prior_config_validation() {
        assert!(PriorConfig::new(0.0).is_err());
        assert!(PriorConfig::new(1.0).is_err());
        assert!(PriorConfig::new(f64::NAN).is_err());
        assert!(PriorConfig::new(0.3).unwrap().with_alpha(0).is_err());
        assert_eq!(PriorConfig::new(0.3).unwrap().resolve_alpha(7), 7);
        assert_eq!(PriorConfig::new(0.3).unwrap().with_alpha(2).unwrap().resolve_alpha(7), 2);
    }

    #[test]
    fn partition_scores() {
        let h = CountHistogram::from_freqs(vec![1, 1]).unwrap();
        let prior = PriorConfig::new(0.5).unwrap().with_alpha(2).unwrap();
        let m = LikelihoodKind::Multinomial;

        let one = [Bin::new(0, 1).unwrap()];
        let s = partition_log_score(&h, &one, &prior, m).unwrap();
        assert_abs_diff_eq!(s, -LN_2 + (1.0f64 / 3.0).ln(), epsilon = 1e-12);

        let two = [Bin::new(0, 0).unwrap(), Bin::new(1, 1).unwrap()];
        let s = partition_log_score(&h, &two, &prior, m).unwrap();
        assert_abs_diff_eq!(s, (1.0f64 / 6.0).ln(), epsilon = 1e-12);

        let h3 = CountHistogram::from_freqs(vec![1, 1, 1]).unwrap();
        let three = [Bin::new(0, 0).unwrap(), Bin::new(1, 1).unwrap(), Bin::new(2, 2).unwrap()];
        assert_eq!(partition_log_score(&h3, &three, &prior, m).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn partition_must_cover_histogram() {
        let h = CountHistogram::from_freqs(vec![1, 1, 1]).unwrap();
        let prior = PriorConfig::new(0.5).unwrap();
        let short = [Bin::new(0, 1).unwrap()];
        assert!(partition_log_score(&h, &short, &prior, LikelihoodKind::Poisson).is_err());
        let gap = [Bin::new(0, 0).unwrap(), Bin::new(2, 2).unwrap()];
        assert!(partition_log_score(&h, &gap, &prior, LikelihoodKind::Poisson).is_err());
    }

    #[test]
    fn locate_is_inclusive_and_clamps() {
        let p = Partition {
            gamma: 0.5,
            alpha: 2,
            beta: 1,
            likelihood: LikelihoodKind::Multinomial,
            map_score: 0.0,
            bins: vec![Bin::new(0, 10).unwrap(), Bin::new(11, 99).unwrap()],
        };
        assert_eq!(p.locate(5), (0, false));
        assert_eq!(p.locate(10), (0, false));
        assert_eq!(p.locate(11), (1, false));
        assert_eq!(p.locate(99), (1, false));
        assert_eq!(p.locate(120), (1, true));
    }

    #[test]
    fn partition_json_is_validated() {
        let good = r#"{"gamma":0.5,"alpha":3,"beta":1,"likelihood":"poisson","map_score":-2.5,
                       "bins":[{"lo":0,"hi":3},{"lo":4,"hi":9}]}"#;
        let p: Partition = serde_json::from_str(good).unwrap();
        assert_eq!(p.likelihood, LikelihoodKind::Poisson);
        assert_eq!(p.n_bins(), 2);

        let gap = good.replace(r#""lo":4"#, r#""lo":5"#);
        assert!(serde_json::from_str::<Partition>(&gap).is_err());
        let empty = r#"{"gamma":0.5,"alpha":3,"beta":1,"likelihood":"poisson","map_score":0,"bins":[]}"#;
        assert!(serde_json::from_str::<Partition>(empty).is_err());
    }
}
