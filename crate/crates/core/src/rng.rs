//! Seeded randomness.
//!
//! Every random choice in the crate is driven by ChaCha8 (`rand_chacha` 0.9)
//! seeded through `SeedableRng::seed_from_u64`. Index draws always go through
//! a `u64` range so plans and splits are identical on 32- and 64-bit targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StdRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> StdRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform index in `0..len`. `len` must be positive.
pub fn uniform_index<R: Rng + ?Sized>(rng: &mut R, len: usize) -> usize {
    debug_assert!(len > 0);
    rng.random_range(0..len as u64) as usize
}

/// Fisher-Yates shuffle built on [`uniform_index`].
pub fn shuffle<T, R: Rng + ?Sized>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = uniform_index(rng, i + 1);
        items.swap(i, j);
    }
}
