use std::cmp::Ordering;

use super::{
    partition_log_score, Bin, LikelihoodKind, Partition, PrefixScores, PriorConfig,
};
use crate::counts::CountHistogram;
use crate::error::{Error, Result};

/// Largest number of occupied cells [`brute_force_partition`] will enumerate.
pub const BRUTE_FORCE_MAX_CELLS: usize = 20;

/// Scores closer than this (relative, with an absolute floor) count as tied.
const SCORE_TOLERANCE: f64 = 1e-10;

/// Compares two MAP scores, treating near-equal values as equal.
fn cmp_score(a: f64, b: f64) -> Ordering {
    if a == b {
        return Ordering::Equal;
    }
    if a.is_finite() && b.is_finite() {
        let scale = a.abs().max(b.abs()).max(1.0);
        if (a - b).abs() <= SCORE_TOLERANCE * scale {
            return Ordering::Equal;
        }
    }
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// `true` when candidate `(score, bins, last_start)` beats the incumbent:
/// higher score, then fewer bins, then an earlier final split.
fn improves(cand: (f64, usize, usize), best: (f64, usize, usize)) -> bool {
    match cmp_score(cand.0, best.0) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => (cand.1, cand.2) < (best.1, best.2),
    }
}

/// Occupied cells of a histogram and the count range each cell run spans.
struct Cells {
    starts: Vec<u64>,
    max_count: u64,
}

impl Cells {
    fn new(hist: &CountHistogram) -> Result<Self> {
        if hist.total() == 0 {
            return Err(Error::Empty("histogram has no mass to partition"));
        }
        Ok(Self {
            starts: hist.occupied(),
            max_count: hist.max_count(),
        })
    }

    fn len(&self) -> usize {
        self.starts.len()
    }

    /// Bin made of cells `i..=j`. The first bin reaches down to 0 and the
    /// last up to `C`, so zero-frequency gaps are absorbed by neighbours.
    fn bin(&self, i: usize, j: usize) -> Bin {
        let lo = if i == 0 { 0 } else { self.starts[i] };
        let hi = if j + 1 == self.len() {
            self.max_count
        } else {
            self.starts[j + 1] - 1
        };
        Bin { lo, hi }
    }

    fn bins_from_starts(&self, starts: &[usize]) -> Vec<Bin> {
        starts
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let j = starts.get(k + 1).map_or(self.len() - 1, |&next| next - 1);
                self.bin(i, j)
            })
            .collect()
    }
}

fn finish(
    hist: &CountHistogram,
    bins: Vec<Bin>,
    prior: &PriorConfig,
    kind: LikelihoodKind,
    alpha: usize,
) -> Result<Partition> {
    let map_score = partition_log_score(hist, &bins, prior, kind)?;
    Ok(Partition {
        gamma: prior.gamma(),
        alpha,
        beta: hist.beta(),
        likelihood: kind,
        map_score,
        bins,
    })
}

/// MAP-optimal contiguous partition of `hist` by dynamic programming.
///
/// Bins split only between occupied cells. Runs in `O(M²)` for `M` occupied
/// cells when the prior's cap is vacuous, and `O(α·M²)` when a cap below
/// `M` is set. Ties go to fewer bins, then to the earlier final split.
pub fn optimal_partition(
    hist: &CountHistogram,
    prior: &PriorConfig,
    kind: LikelihoodKind,
) -> Result<Partition> {
    let cells = Cells::new(hist)?;
    let m = cells.len();
    let alpha = prior.resolve_alpha(m);
    let scores = PrefixScores::new(hist, kind);
    let lik = |i: usize, j: usize| {
        let b = cells.bin(i, j);
        scores.score(b.lo, b.hi)
    };

    let starts = if alpha >= m {
        unbounded(m, prior.gamma().ln(), &lik)
    } else {
        capped(m, alpha, prior.gamma().ln(), &lik)
    };
    finish(hist, cells.bins_from_starts(&starts), prior, kind, alpha)
}

/// Single-index recurrence: each bin carries an additive `ln γ` penalty.
fn unbounded(m: usize, ln_gamma: f64, lik: &impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let mut best = vec![f64::NEG_INFINITY; m];
    let mut n_bins = vec![0usize; m];
    let mut last_start = vec![0usize; m];

    for r in 0..m {
        let mut incumbent = (f64::NEG_INFINITY, usize::MAX, usize::MAX);
        for i in 0..=r {
            let (prev, prev_bins) = if i == 0 { (0.0, 0) } else { (best[i - 1], n_bins[i - 1]) };
            let cand = (prev + lik(i, r) + ln_gamma, prev_bins + 1, i);
            if improves(cand, incumbent) {
                incumbent = cand;
            }
        }
        best[r] = incumbent.0;
        n_bins[r] = incumbent.1;
        last_start[r] = incumbent.2;
    }

    let mut starts = Vec::with_capacity(n_bins[m - 1]);
    let mut r = m;
    while r > 0 {
        let i = last_start[r - 1];
        starts.push(i);
        r = i;
    }
    starts.reverse();
    starts
}

/// Two-index recurrence over (bin count, last cell) for a binding cap.
fn capped(m: usize, alpha: usize, ln_gamma: f64, lik: &impl Fn(usize, usize) -> f64) -> Vec<usize> {
    // table[k-1][r]: best log-likelihood of cells 0..=r split into exactly k bins.
    let mut table = vec![vec![f64::NEG_INFINITY; m]; alpha];
    let mut split = vec![vec![0usize; m]; alpha];
    for (r, cell) in table[0].iter_mut().enumerate() {
        *cell = lik(0, r);
    }
    for k in 2..=alpha {
        for r in (k - 1)..m {
            let mut incumbent = (f64::NEG_INFINITY, usize::MAX);
            for i in (k - 1)..=r {
                let cand = table[k - 2][i - 1] + lik(i, r);
                if cmp_score(cand, incumbent.0) == Ordering::Greater {
                    incumbent = (cand, i);
                }
            }
            table[k - 1][r] = incumbent.0;
            split[k - 1][r] = incumbent.1;
        }
    }

    let mut chosen = (f64::NEG_INFINITY, 1usize);
    for k in 1..=alpha.min(m) {
        let total = table[k - 1][m - 1] + k as f64 * ln_gamma;
        if cmp_score(total, chosen.0) == Ordering::Greater {
            chosen = (total, k);
        }
    }

    let mut starts = Vec::with_capacity(chosen.1);
    let mut r = m - 1;
    for k in (1..=chosen.1).rev() {
        let i = if k == 1 { 0 } else { split[k - 1][r] };
        starts.push(i);
        if k > 1 {
            r = i - 1;
        }
    }
    starts.reverse();
    starts
}

/// Exhaustive search over all `2^(M-1)` contiguous partitions of the
/// occupied cells, with the same scoring and tie rule as [`optimal_partition`].
pub fn brute_force_partition(
    hist: &CountHistogram,
    prior: &PriorConfig,
    kind: LikelihoodKind,
) -> Result<Partition> {
    let cells = Cells::new(hist)?;
    let m = cells.len();
    if m > BRUTE_FORCE_MAX_CELLS {
        return Err(Error::TooManyCells {
            cells: m,
            limit: BRUTE_FORCE_MAX_CELLS,
        });
    }
    let alpha = prior.resolve_alpha(m);

    let mut best: Option<((f64, usize, usize), Vec<Bin>)> = None;
    for mask in 0u32..(1u32 << (m - 1)) {
        let mut starts = vec![0usize];
        starts.extend((0..m - 1).filter(|b| mask >> b & 1 == 1).map(|b| b + 1));
        let bins = cells.bins_from_starts(&starts);
        let score = partition_log_score(hist, &bins, prior, kind)?;
        let key = (score, starts.len(), *starts.last().unwrap());
        if best.as_ref().is_none_or(|(incumbent, _)| improves(key, *incumbent)) {
            best = Some((key, bins));
        }
    }
    let (_, bins) = best.expect("at least one candidate");
    finish(hist, bins, prior, kind, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(freqs: &[u64]) -> CountHistogram {
        CountHistogram::from_freqs(freqs.to_vec()).unwrap()
    }

    fn bins(pairs: &[(u64, u64)]) -> Vec<Bin> {
        pairs.iter().map(|&(lo, hi)| Bin { lo, hi }).collect()
    }

    #[test]
    fn single_cell_gives_one_bin() {
        let prior = PriorConfig::new(0.5).unwrap();
        for kind in [LikelihoodKind::Multinomial, LikelihoodKind::Poisson] {
            let p = optimal_partition(&hist(&[0, 0, 0, 0, 0, 1]), &prior, kind).unwrap();
            assert_eq!(p.bins, bins(&[(0, 5)]));
            let b = brute_force_partition(&hist(&[4]), &prior, kind).unwrap();
            assert_eq!(b.bins, bins(&[(0, 0)]));
        }
    }

    #[test]
    fn zero_cells_are_absorbed() {
        // occupied cells 0, 3, 7; bins can only start there.
        let h = hist(&[40, 0, 0, 1, 0, 0, 0, 40]);
        let prior = PriorConfig::new(0.1).unwrap();
        let p = optimal_partition(&h, &prior, LikelihoodKind::Multinomial).unwrap();
        for b in &p.bins {
            assert!(b.lo == 0 || [3, 7].contains(&b.lo), "{b:?}");
        }
        assert_eq!(p.bins.last().unwrap().hi, 7);
    }

    #[test]
    fn empty_histogram_is_rejected() {
        let prior = PriorConfig::new(0.5).unwrap();
        assert!(optimal_partition(&hist(&[0, 0]), &prior, LikelihoodKind::Poisson).is_err());
    }

    #[test]
    fn brute_force_refuses_large_inputs() {
        let prior = PriorConfig::new(0.5).unwrap();
        let h = hist(&[1; 21]);
        assert!(matches!(
            brute_force_partition(&h, &prior, LikelihoodKind::Multinomial),
            Err(Error::TooManyCells { cells: 21, .. })
        ));
        assert!(brute_force_partition(&hist(&[1; 20]), &prior, LikelihoodKind::Multinomial).is_ok());
    }

    #[test]
    fn capped_dp_respects_alpha() {
        let h = hist(&[50, 1, 50, 1, 50, 1, 50]);
        let free = PriorConfig::new(0.9).unwrap();
        let p = optimal_partition(&h, &free, LikelihoodKind::Multinomial).unwrap();
        assert!(p.n_bins() > 2);
        for alpha in 1..=3 {
            let prior = free.with_alpha(alpha).unwrap();
            let dp = optimal_partition(&h, &prior, LikelihoodKind::Multinomial).unwrap();
            let oracle = brute_force_partition(&h, &prior, LikelihoodKind::Multinomial).unwrap();
            assert!(dp.n_bins() <= alpha);
            assert_eq!(dp.bins, oracle.bins);
            assert_eq!(dp.alpha, alpha);
        }
    }
}
