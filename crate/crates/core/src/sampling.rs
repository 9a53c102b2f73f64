//! Count-balanced minibatch plans.
//!
//! Samples are grouped by the bin their count falls into. An epoch draws
//! every sample exactly once, without replacement, either cycling through
//! the bins in order (round robin) or picking a random non-exhausted bin for
//! each draw (random bin). Exhausted bins leave the rotation.

use serde::{Deserialize, Serialize};

use crate::counts::CountRecord;
use crate::error::{validation, Result};
use crate::rng::{self, StdRng};
use crate::stratify::Partition;

/// Samples grouped by bin, each list in input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinAssignment<T> {
    pub bins: Vec<Vec<T>>,
    /// Samples whose count exceeded the partition range and were put in the last bin.
    pub clamped: Vec<T>,
}

impl<T> BinAssignment<T> {
    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }
}

/// Routes each record to the bin containing its count.
pub fn assign_bins(records: &[CountRecord], partition: &Partition) -> BinAssignment<String> {
    assign_by(
        records.iter().map(|r| (r.id.clone(), r.count)),
        partition,
    )
}

/// Generic routing over `(id, count)` pairs.
pub fn assign_by<T: Clone>(
    items: impl IntoIterator<Item = (T, u64)>,
    partition: &Partition,
) -> BinAssignment<T> {
    let mut bins = vec![Vec::new(); partition.n_bins()];
    let mut clamped = Vec::new();
    for (id, count) in items {
        let (k, was_clamped) = partition.locate(count);
        if was_clamped {
            clamped.push(id.clone());
        }
        bins[k].push(id);
    }
    BinAssignment { bins, clamped }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Round robin over bins, starting at the first.
    Rr,
    /// Uniformly random non-exhausted bin per draw.
    Rs,
}

impl std::str::FromStr for Scheme {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rr" => Ok(Self::Rr),
            "rs" => Ok(Self::Rs),
            other => Err(validation(format!("unknown scheme `{other}` (expected rr or rs)"))),
        }
    }
}

/// One epoch of minibatches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan<T> {
    pub scheme: Scheme,
    pub batch_size: usize,
    pub seed: u64,
    pub batches: Vec<Vec<T>>,
}

impl<T> BatchPlan<T> {
    /// All draws in epoch order.
    pub fn draws(&self) -> impl Iterator<Item = &T> {
        self.batches.iter().flatten()
    }
}

pub fn plan_epoch<T: Clone>(
    assignment: &BinAssignment<T>,
    scheme: Scheme,
    batch_size: usize,
    seed: u64,
) -> Result<BatchPlan<T>> {
    match scheme {
        Scheme::Rr => plan_epoch_rr(assignment, batch_size, seed),
        Scheme::Rs => plan_epoch_rs(assignment, batch_size, seed),
    }
}

/// Round robin: one random unused sample per bin visit, cursor starting at bin 0.
pub fn plan_epoch_rr<T: Clone>(
    assignment: &BinAssignment<T>,
    batch_size: usize,
    seed: u64,
) -> Result<BatchPlan<T>> {
    let mut pools = Pools::new(assignment, batch_size)?;
    let mut rng = rng::seeded(seed);
    let mut cursor = 0;
    while !pools.active.is_empty() {
        let bin = pools.active[cursor];
        let emptied = pools.draw(bin, &mut rng);
        if emptied {
            pools.active.remove(cursor);
        } else {
            cursor += 1;
        }
        if cursor >= pools.active.len() {
            cursor = 0;
        }
    }
    Ok(pools.into_plan(Scheme::Rr, batch_size, seed))
}

/// Random bin: a uniformly chosen non-exhausted bin, then a random unused sample from it.
pub fn plan_epoch_rs<T: Clone>(
    assignment: &BinAssignment<T>,
    batch_size: usize,
    seed: u64,
) -> Result<BatchPlan<T>> {
    let mut pools = Pools::new(assignment, batch_size)?;
    let mut rng = rng::seeded(seed);
    while !pools.active.is_empty() {
        let slot = rng::uniform_index(&mut rng, pools.active.len());
        if pools.draw(pools.active[slot], &mut rng) {
            pools.active.remove(slot);
        }
    }
    Ok(pools.into_plan(Scheme::Rs, batch_size, seed))
}

/// Remaining samples per bin plus the draw sequence built so far.
struct Pools<T> {
    remaining: Vec<Vec<T>>,
    active: Vec<usize>,
    draws: Vec<T>,
}

impl<T: Clone> Pools<T> {
    fn new(assignment: &BinAssignment<T>, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(validation("batch size must be at least 1"));
        }
        if assignment.is_empty() {
            return Err(validation("cannot plan an epoch over an empty assignment"));
        }
        let active = (0..assignment.bins.len())
            .filter(|&k| !assignment.bins[k].is_empty())
            .collect();
        Ok(Self {
            remaining: assignment.bins.clone(),
            active,
            draws: Vec::with_capacity(assignment.total()),
        })
    }

    /// Moves a uniformly random remaining sample of `bin` to the draw
    /// sequence; returns whether the bin is now empty.
    fn draw(&mut self, bin: usize, rng: &mut StdRng) -> bool {
        let pool = &mut self.remaining[bin];
        let pick = rng::uniform_index(rng, pool.len());
        self.draws.push(pool.swap_remove(pick));
        pool.is_empty()
    }

    fn into_plan(self, scheme: Scheme, batch_size: usize, seed: u64) -> BatchPlan<T> {
        BatchPlan {
            scheme,
            batch_size,
            seed,
            batches: self.draws.chunks(batch_size).map(<[T]>::to_vec).collect(),
        }
    }
}
