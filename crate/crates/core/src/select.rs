//! Cross-validated grid search for the prior parameter γ.
//!
//! Each `(γ, ratio, seed)` cell splits the records, fits an optimal partition
//! on the smoothed training histogram and scores the held-out records under
//! the resulting piecewise-uniform density. Per ratio the γ values are ranked
//! by mean held-out log-likelihood; the γ with the smallest rank sum wins.

use std::cmp::Ordering;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::counts::{build_histogram, CountRecord, DEFAULT_BETA};
use crate::error::{validation, Result};
use crate::rng;
use crate::stratify::{optimal_partition, LikelihoodKind, Partition, PriorConfig};

pub const DEFAULT_GAMMAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const DEFAULT_RATIOS: [f64; 3] = [0.1, 0.2, 0.25];
pub const DEFAULT_SEEDS: usize = 10;

/// Grid for [`select_gamma`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub gammas: Vec<f64>,
    /// Held-out fractions.
    pub ratios: Vec<f64>,
    pub n_seeds: usize,
    pub beta: u64,
    pub likelihood: LikelihoodKind,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            gammas: DEFAULT_GAMMAS.to_vec(),
            ratios: DEFAULT_RATIOS.to_vec(),
            n_seeds: DEFAULT_SEEDS,
            beta: DEFAULT_BETA,
            likelihood: LikelihoodKind::Multinomial,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() || self.ratios.is_empty() {
            return Err(validation("grid needs at least one gamma and one ratio"));
        }
        if self.n_seeds == 0 {
            return Err(validation("grid needs at least one seed"));
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
            return Err(validation(format!("gamma {g} outside (0, 1)")));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(validation(format!("ratio {r} outside (0, 1)")));
        }
        Ok(())
    }
}

/// Mean held-out log-likelihood for one `(γ, ratio)` grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell {
    pub gamma: f64,
    pub ratio: f64,
    pub mean_loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaSelection {
    pub gamma_best: f64,
    /// Grid cells in canonical order: γ outer, ratio inner.
    pub table: Vec<GridCell>,
    #[serde(serialize_with = "index_sums_as_map")]
    pub index_sums: Vec<(f64, usize)>,
    /// `ranks[r][g]`: 0-based position of gamma `g` in ratio `r`'s descending order.
    #[serde(skip)]
    pub ranks: Vec<Vec<usize>>,
}

fn index_sums_as_map<S: Serializer>(sums: &[(f64, usize)], s: S) -> Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(sums.len()))?;
    for (gamma, sum) in sums {
        map.serialize_entry(&gamma.to_string(), sum)?;
    }
    map.end()
}

/// Seeded split: the last `⌈ratio·n⌉` records of the shuffled order are held out.
pub fn split_records(
    records: &[CountRecord],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<CountRecord>, Vec<CountRecord>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(validation(format!("ratio {ratio} outside (0, 1)")));
    }
    let n = records.len();
    let n_test = held_out_size(n, ratio);
    if n_test == 0 || n_test >= n {
        return Err(validation(format!(
            "ratio {ratio} on {n} records leaves an empty train or test side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::seeded(seed), &mut order);
    let (train, test) = order.split_at(n - n_test);
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect();
    Ok((pick(train), pick(test)))
}

/// `⌈ratio·n⌉`, ignoring the representation error of products such as `0.1·30`.
fn held_out_size(n: usize, ratio: f64) -> usize {
    let exact = ratio * n as f64;
    let nearest = exact.round();
    if (exact - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        exact.ceil() as usize
    }
}

/// Log-probability of `test` under the piecewise-uniform density fitted on `train`.
///
/// A cell's probability is its bin's share of the smoothed training mass
/// spread evenly over the bin's width. Test counts above the training range
/// use the last bin's per-cell probability.
pub fn held_out_log_likelihood(
    train: &[CountRecord],
    test: &[CountRecord],
    gamma: f64,
    spec: &GridSpec,
) -> Result<f64> {
    if train.is_empty() || test.is_empty() {
        return Err(validation("held-out scoring needs non-empty train and test sets"));
    }
    let hist = build_histogram(train, None)?.smooth(spec.beta);
    let partition = optimal_partition(&hist, &PriorConfig::new(gamma)?, spec.likelihood)?;
    Ok(score_held_out(&hist_masses(&hist, &partition), &partition, hist.total(), test))
}

fn hist_masses(hist: &crate::counts::CountHistogram, partition: &Partition) -> Vec<u64> {
    partition
        .bins
        .iter()
        .map(|b| hist.freqs()[b.lo as usize..=b.hi as usize].iter().sum())
        .collect()
}

fn score_held_out(masses: &[u64], partition: &Partition, total: u64, test: &[CountRecord]) -> f64 {
    let total = total as f64;
    let ln_cell: Vec<f64> = partition
        .bins
        .iter()
        .zip(masses)
        .map(|(b, &mass)| (mass as f64 / total / b.width() as f64).ln())
        .collect();
    test.iter().map(|r| ln_cell[partition.locate(r.count).0]).sum()
}

/// Runs the full grid and picks γ by smallest rank-index sum across ratios.
pub fn select_gamma(records: &[CountRecord], spec: &GridSpec) -> Result<GammaSelection> {
    spec.validate()?;
    if records.is_empty() {
        return Err(validation("grid search needs records"));
    }

    // Splits depend only on (ratio, seed); share them across γ.
    let mut folds = Vec::with_capacity(spec.ratios.len() * spec.n_seeds);
    for &ratio in &spec.ratios {
        for seed in 0..spec.n_seeds as u64 {
            folds.push(split_records(records, ratio, seed)?);
        }
    }
    let folds = folds;

    let cells: Vec<(usize, usize, usize)> = (0..spec.gammas.len())
        .flat_map(|g| {
            (0..spec.ratios.len()).flat_map(move |r| (0..spec.n_seeds).map(move |s| (g, r, s)))
        })
        .collect();
    let eval = |&(g, r, s): &(usize, usize, usize)| {
        let (train, test) = &folds[r * spec.n_seeds + s];
        held_out_log_likelihood(train, test, spec.gammas[g], spec)
    };

    #[cfg(feature = "parallel")]
    let liks: Vec<Result<f64>> = {
        use rayon::prelude::*;
        cells.par_iter().map(eval).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let liks: Vec<Result<f64>> = cells.iter().map(eval).collect();
    let liks = liks.into_iter().collect::<Result<Vec<f64>>>()?;

    // Reduce in canonical grid order so the result is schedule-independent.
    let mut table = Vec::with_capacity(spec.gammas.len() * spec.ratios.len());
    for (g, &gamma) in spec.gammas.iter().enumerate() {
        for (r, &ratio) in spec.ratios.iter().enumerate() {
            let start = (g * spec.ratios.len() + r) * spec.n_seeds;
            let sum: f64 = liks[start..start + spec.n_seeds].iter().sum();
            table.push(GridCell {
                gamma,
                ratio,
                mean_loglik: sum / spec.n_seeds as f64,
            });
        }
    }

    let n_ratios = spec.ratios.len();
    let means: Vec<Vec<f64>> = (0..n_ratios)
        .map(|r| {
            (0..spec.gammas.len())
                .map(|g| table[g * n_ratios + r].mean_loglik)
                .collect()
        })
        .collect();
    Ok(rank_gammas(&spec.gammas, &means, table))
}

/// Ranks γ per ratio by descending mean (ties to the smaller γ) and picks
/// the γ with the lowest index sum (ties to the smaller γ).
///
/// `means[r][g]` is the mean held-out log-likelihood of gamma `g` at ratio `r`.
pub fn rank_gammas(gammas: &[f64], means: &[Vec<f64>], table: Vec<GridCell>) -> GammaSelection {
    let by_value = |a: &usize, b: &usize| gammas[*a].total_cmp(&gammas[*b]);
    let mut ranks = Vec::with_capacity(means.len());
    for row in means {
        let mut order: Vec<usize> = (0..gammas.len()).collect();
        order.sort_by(|a, b| match row[*b].total_cmp(&row[*a]) {
            Ordering::Equal => by_value(a, b),
            other => other,
        });
        let mut rank = vec![0usize; gammas.len()];
        for (position, &g) in order.iter().enumerate() {
            rank[g] = position;
        }
        ranks.push(rank);
    }

    let index_sums: Vec<(f64, usize)> = gammas
        .iter()
        .enumerate()
        .map(|(g, &gamma)| (gamma, ranks.iter().map(|rank| rank[g]).sum()))
        .collect();
    let best = (0..gammas.len())
        .min_by(|a, b| index_sums[*a].1.cmp(&index_sums[*b].1).then_with(|| by_value(a, b)))
        .expect("non-empty grid");

    GammaSelection {
        gamma_best: gammas[best],
        table,
        index_sums,
        ranks,
    }
}

/// Grid search for γ, then the optimal partition of the full smoothed histogram.
pub fn optimal_bins(records: &[CountRecord], spec: &GridSpec) -> Result<Partition> {
    Ok(optimal_bins_with_selection(records, spec)?.0)
}

pub fn optimal_bins_with_selection(
    records: &[CountRecord],
    spec: &GridSpec,
) -> Result<(Partition, GammaSelection)> {
    let selection = select_gamma(records, spec)?;
    let partition = bins_at_gamma(records, selection.gamma_best, spec.beta, spec.likelihood)?;
    Ok((partition, selection))
}

/// Optimal partition of the smoothed histogram of `records` at a fixed γ.
pub fn bins_at_gamma(
    records: &[CountRecord],
    gamma: f64,
    beta: u64,
    likelihood: LikelihoodKind,
) -> Result<Partition> {
    let hist = build_histogram(records, None)?.smooth(beta);
    optimal_partition(&hist, &PriorConfig::new(gamma)?, likelihood)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::LN_2;

    fn records(counts: &[u64]) -> Vec<CountRecord> {
        counts
            .iter()
            .enumerate()
            .map(|(i, &c)| CountRecord::new(format!("r{i}"), c))
            .collect()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let recs = records(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
        let (train, test) = split_records(&recs, 0.2, 3).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        assert_eq!(split_records(&recs, 0.2, 3).unwrap(), (train.clone(), test.clone()));
        let mut all: Vec<_> = train.iter().chain(&test).map(|r| r.count).collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());

        assert!(split_records(&records(&[1]), 0.5, 0).is_err());
        assert!(split_records(&recs, 1.0, 0).is_err());
    }

    #[test]
    fn held_out_size_is_exact_on_round_products() {
        assert_eq!(held_out_size(30, 0.1), 3);
        assert_eq!(held_out_size(10, 0.25), 3);
        assert_eq!(held_out_size(50, 0.1), 5);
        assert_eq!(held_out_size(7, 0.2), 2);
    }

    #[test]
    fn held_out_examples() {
        // Train smoothed freqs [2, 2] come from raw [1, 1] plus beta 1.
        let spec = GridSpec::default();
        let train = records(&[0, 1]);
        let test = records(&[0, 0]);
        let hist = build_histogram(&train, None).unwrap().smooth(1);
        assert_eq!(hist.freqs(), &[2, 2]);
        let v = held_out_log_likelihood(&train, &test, 0.1, &spec).unwrap();
        assert_abs_diff_eq!(v, 2.0 * (0.5f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, -2.0 * LN_2, epsilon = 1e-12);

        // Beyond-range test counts are scored in the last bin.
        let far = held_out_log_likelihood(&train, &records(&[40]), 0.1, &spec).unwrap();
        assert!(far.is_finite());
        assert_abs_diff_eq!(far, (0.5f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn held_out_two_bin_substitution() {
        let partition = Partition {
            gamma: 0.5,
            alpha: 2,
            beta: 0,
            likelihood: LikelihoodKind::Multinomial,
            map_score: 0.0,
            bins: vec![
                crate::stratify::Bin { lo: 0, hi: 0 },
                crate::stratify::Bin { lo: 1, hi: 1 },
            ],
        };
        let v = score_held_out(&[3, 1], &partition, 4, &records(&[0]));
        assert_abs_diff_eq!(v, (0.75f64).ln(), epsilon = 1e-15);
    }

    fn cells(gammas: &[f64], ratios: &[f64]) -> Vec<GridCell> {
        gammas
            .iter()
            .flat_map(|&gamma| ratios.iter().map(move |&ratio| GridCell { gamma, ratio, mean_loglik: 0.0 }))
            .collect()
    }

    #[test]
    fn rank_rule_examples() {
        let g = [0.3, 0.5];
        let sel = rank_gammas(&g, &[vec![-10.0, -12.0], vec![-11.0, -9.0]], cells(&g, &[0.1, 0.2]));
        assert_eq!(sel.ranks, vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(sel.index_sums, vec![(0.3, 1), (0.5, 1)]);
        assert_eq!(sel.gamma_best, 0.3);

        let sel = rank_gammas(&g, &[vec![-10.0, -12.0], vec![-9.0, -11.0]], cells(&g, &[0.1, 0.2]));
        assert_eq!(sel.index_sums, vec![(0.3, 0), (0.5, 2)]);
        assert_eq!(sel.gamma_best, 0.3);

        let sel = rank_gammas(&[0.7], &[vec![-1.0]], cells(&[0.7], &[0.1]));
        assert_eq!(sel.gamma_best, 0.7);
    }

    #[test]
    fn equal_means_rank_smaller_gamma_first() {
        let g = [0.6, 0.2, 0.4];
        let sel = rank_gammas(&g, &[vec![-5.0, -5.0, -5.0]], cells(&g, &[0.1]));
        assert_eq!(sel.ranks, vec![vec![2, 0, 1]]);
        assert_eq!(sel.gamma_best, 0.2);
    }

    #[test]
    fn grid_defaults() {
        let spec = GridSpec::default();
        assert_eq!(spec.gammas, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]);
        assert_eq!(spec.ratios, vec![0.1, 0.2, 0.25]);
        assert_eq!(spec.n_seeds, 10);
        assert_eq!(spec.beta, 1);
        assert!(GridSpec { gammas: vec![1.2], ..GridSpec::default() }.validate().is_err());
        assert!(GridSpec { ratios: vec![], ..GridSpec::default() }.validate().is_err());
    }

    #[test]
    fn single_gamma_grid_matches_direct_partition() {
        let recs = records(&[0, 0, 1, 1, 1, 2, 3, 5, 8, 13, 13, 14, 30, 31, 60, 2, 2, 1, 0, 4]);
        let spec = GridSpec { gammas: vec![0.4], ..GridSpec::default() };
        let (p, sel) = optimal_bins_with_selection(&recs, &spec).unwrap();
        assert_eq!(sel.gamma_best, 0.4);
        let direct = bins_at_gamma(&recs, 0.4, 1, LikelihoodKind::Multinomial).unwrap();
        assert_eq!(p, direct);
    }

    #[test]
    fn selection_json_shape() {
        let g = [0.3, 0.5];
        let sel = rank_gammas(&g, &[vec![-10.0, -12.0]], cells(&g, &[0.1]));
        let v: serde_json::Value = serde_json::from_str(&serde_json::to_string(&sel).unwrap()).unwrap();
        assert_eq!(v["gamma_best"], 0.3);
        assert_eq!(v["index_sums"]["0.5"], 1);
        assert_eq!(v["table"][0]["ratio"], 0.1);
        assert!(v.get("ranks").is_none());
    }
}
