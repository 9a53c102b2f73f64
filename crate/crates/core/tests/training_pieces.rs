use std::collections::HashMap;

use countstrata::eval::{global_stats, per_bin_stats, pool};
use countstrata::loss::{bin_loss, bin_loss_subgradient};
use countstrata::sampling::{assign_bins, plan_epoch};
use countstrata::select::{select_gamma, DEFAULT_GAMMAS};
use countstrata::{Bin, CountRecord, GridSpec, LikelihoodKind, Partition, PredictionRecord, Scheme};

struct Lcg(u64);

impl Lcg {
    fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    fn below(&mut self, n: u64) -> u64 {
        (self.next_f64() * n as f64) as u64
    }
}

fn partition(bins: &[(u64, u64)]) -> Partition {
    Partition {
        gamma: 0.5,
        alpha: bins.len(),
        beta: 1,
        likelihood: LikelihoodKind::Multinomial,
        map_score: 0.0,
        bins: bins.iter().map(|&(lo, hi)| Bin { lo, hi }).collect(),
    }
}

fn random_partition(rng: &mut Lcg, max: u64) -> Partition {
    let mut edges = vec![0u64];
    while *edges.last().unwrap() < max {
        let lo = *edges.last().unwrap();
        edges.push((lo + 1 + rng.below(max / 3 + 1)).min(max + 1));
        if *edges.last().unwrap() == max + 1 {
            break;
        }
    }
    if *edges.last().unwrap() != max + 1 {
        edges.push(max + 1);
    }
    let bins: Vec<(u64, u64)> = edges.windows(2).map(|w| (w[0], w[1] - 1)).collect();
    partition(&bins)
}

#[test]
fn subgradient_agrees_with_central_differences() {
    let mut rng = Lcg(42);
    let h = 1e-7;
    let mut checked = 0;
    while checked < 1000 {
        let lo = rng.below(200);
        let bin = Bin { lo, hi: lo + rng.below(60) };
        let y = (bin.lo + rng.below(bin.width())) as f64;
        let y_hat = bin.lo as f64 - 40.0 + rng.next_f64() * (bin.width() as f64 + 80.0);
        let lambda1 = [0.5, 1.0, 10.0][rng.below(3) as usize];
        let near_kink = [y, bin.lo as f64, bin.hi as f64].iter().any(|k| (y_hat - k).abs() < 1e-3);
        if near_kink {
            continue;
        }
        let fd = (bin_loss(y, y_hat + h, bin, lambda1).unwrap() - bin_loss(y, y_hat - h, bin, lambda1).unwrap())
            / (2.0 * h);
        let g = bin_loss_subgradient(y, y_hat, bin, lambda1).unwrap();
        assert!((fd - g).abs() < 1e-6, "y={y} y_hat={y_hat} {bin:?}: {fd} vs {g}");
        checked += 1;
    }
}

#[test]
fn pooled_mean_is_global_mean_and_pooled_std_is_smaller() {
    let mut rng = Lcg(5);
    for _ in 0..100 {
        let max = 20 + rng.below(300);
        let p = random_partition(&mut rng, max);
        let n = 1 + rng.below(200) as usize;
        let preds: Vec<PredictionRecord> = (0..n)
            .map(|i| {
                let y = rng.below(max + 30);
                let y_hat = y as f64 + (rng.next_f64() - 0.5) * 0.4 * (y as f64 + 5.0);
                PredictionRecord::new(format!("p{i}"), y, y_hat)
            })
            .collect();
        let stats = per_bin_stats(&preds, &p);
        assert_eq!(stats.iter().map(|s| s.n).sum::<usize>(), n);
        let (mu, sigma) = pool(&stats).unwrap();
        let (mae, std) = global_stats(&preds).unwrap();

        let errs: Vec<f64> = preds.iter().map(|r| (r.y as f64 - r.y_hat).abs()).collect();
        let direct_mean = errs.iter().sum::<f64>() / n as f64;
        let direct_std = (errs.iter().map(|e| (e - direct_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((mae - direct_mean).abs() < 1e-12);
        assert!((std - direct_std).abs() < 1e-12);
        assert!((mu - mae).abs() < 1e-12 * mae.max(1.0));
        assert!(sigma <= std + 1e-12);
    }
}

fn random_records(rng: &mut Lcg, n: usize) -> Vec<CountRecord> {
    (0..n)
        .map(|i| CountRecord::new(format!("r{i}"), (rng.next_f64().powi(3) * 400.0) as u64))
        .collect()
}

#[test]
fn plans_cover_each_sample_once() {
    let mut rng = Lcg(77);
    for trial in 0..100 {
        let n = 1 + rng.below(150) as usize;
        let records = random_records(&mut rng, n);
        let p = random_partition(&mut rng, 420);
        let assignment = assign_bins(&records, &p);
        let bin_of: HashMap<&str, usize> = assignment
            .bins
            .iter()
            .enumerate()
            .flat_map(|(k, ids)| ids.iter().map(move |id| (id.as_str(), k)))
            .collect();
        let batch_size = 1 + rng.below(20) as usize;
        for scheme in [Scheme::Rr, Scheme::Rs] {
            let plan = plan_epoch(&assignment, scheme, batch_size, trial).unwrap();
            assert_eq!(plan, plan_epoch(&assignment, scheme, batch_size, trial).unwrap());
            let mut drawn: Vec<&String> = plan.draws().collect();
            drawn.sort();
            let mut ids: Vec<&String> = records.iter().map(|r| &r.id).collect();
            ids.sort();
            assert_eq!(drawn, ids);
            assert!(plan.batches.iter().all(|b| !b.is_empty() && b.len() <= batch_size));
            assert!(plan.batches[..plan.batches.len() - 1].iter().all(|b| b.len() == batch_size));

            if scheme == Scheme::Rr {
                let nonempty: Vec<usize> = (0..p.n_bins()).filter(|&k| !assignment.bins[k].is_empty()).collect();
                let mut seen = vec![0usize; p.n_bins()];
                for id in plan.draws() {
                    let k = bin_of[id.as_str()];
                    seen[k] += 1;
                    if nonempty.iter().all(|&j| seen[j] < assignment.bins[j].len()) {
                        let counts: Vec<usize> = nonempty.iter().map(|&j| seen[j]).collect();
                        let gap = counts.iter().max().unwrap() - counts.iter().min().unwrap();
                        assert!(gap <= 1, "{counts:?}");
                    }
                }
            }
        }
    }
}

#[test]
fn gamma_selection_is_repeatable() {
    let mut rng = Lcg(9);
    let records = random_records(&mut rng, 120);
    let spec = GridSpec { n_seeds: 3, ..GridSpec::default() };
    let first = select_gamma(&records, &spec).unwrap();
    for _ in 0..2 {
        assert_eq!(select_gamma(&records, &spec).unwrap(), first);
    }
    assert_eq!(first.ranks.len(), spec.ratios.len());
    for rank in &first.ranks {
        let mut sorted = rank.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..DEFAULT_GAMMAS.len()).collect::<Vec<_>>());
    }
    assert!(DEFAULT_GAMMAS.contains(&first.gamma_best));
}
