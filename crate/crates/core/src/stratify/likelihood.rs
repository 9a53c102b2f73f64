use serde::{Deserialize, Serialize};

use crate::counts::CountHistogram;
use crate::error::{Error, Result};

/// Probability model for the cell frequencies inside one bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LikelihoodKind {
    /// Multinomial over the bin's cells with uniform cell probabilities `1/m`.
    #[default]
    Multinomial,
    /// Independent Poisson cells sharing the rate `X/m`.
    Poisson,
}

impl std::str::FromStr for LikelihoodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial" => Ok(Self::Multinomial),
            "poisson" => Ok(Self::Poisson),
            other => Err(crate::error::validation(format!(
                "unknown likelihood `{other}` (expected multinomial or poisson)"
            ))),
        }
    }
}

impl std::fmt::Display for LikelihoodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Multinomial => "multinomial",
            Self::Poisson => "poisson",
        })
    }
}

/// `ln(n!)` via log-gamma.
pub fn ln_factorial(n: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

/// Log-likelihood of a bin from its mass, width and `Σ ln(x_j!)`.
#[inline]
fn from_sufficient(kind: LikelihoodKind, mass: u64, width: u64, sum_ln_fact: f64) -> f64 {
    let x = mass as f64;
    let m = width as f64;
    match kind {
        LikelihoodKind::Multinomial => ln_factorial(mass) - sum_ln_fact - x * m.ln(),
        LikelihoodKind::Poisson if mass == 0 => 0.0,
        LikelihoodKind::Poisson => x * (x / m).ln() - x - sum_ln_fact,
    }
}

/// Log-likelihood of the cells `lo..=hi` of `hist` forming one bin.
///
/// Sums the cells directly; the optimizer uses [`PrefixScores`] instead.
pub fn bin_log_likelihood(
    hist: &CountHistogram,
    lo: u64,
    hi: u64,
    kind: LikelihoodKind,
) -> Result<f64> {
    if lo > hi || hi > hist.max_count() {
        return Err(Error::Range {
            lo,
            hi,
            max_count: hist.max_count(),
        });
    }
    let cells = &hist.freqs()[lo as usize..=hi as usize];
    let mass = cells.iter().sum();
    let sum_ln_fact = cells.iter().map(|&x| ln_factorial(x)).sum();
    Ok(from_sufficient(kind, mass, hi - lo + 1, sum_ln_fact))
}

/// Prefix sums of cell mass and `ln(x!)` for O(1) bin scoring.
#[derive(Debug, Clone)]
pub(crate) struct PrefixScores {
    mass: Vec<u64>,
    ln_fact: Vec<f64>,
    kind: LikelihoodKind,
}

impl PrefixScores {
    pub fn new(hist: &CountHistogram, kind: LikelihoodKind) -> Self {
        let n = hist.freqs().len();
        let mut mass = Vec::with_capacity(n + 1);
        let mut ln_fact = Vec::with_capacity(n + 1);
        mass.push(0);
        ln_fact.push(0.0);
        for &x in hist.freqs() {
            mass.push(mass.last().unwrap() + x);
            ln_fact.push(ln_fact.last().unwrap() + ln_factorial(x));
        }
        Self {
            mass,
            ln_fact,
            kind,
        }
    }

    /// Score of the bin `[lo, hi]`; bounds are trusted.
    #[inline]
    pub fn score(&self, lo: u64, hi: u64) -> f64 {
        let (a, b) = (lo as usize, hi as usize + 1);
        from_sufficient(
            self.kind,
            self.mass[b] - self.mass[a],
            hi - lo + 1,
            self.ln_fact[b] - self.ln_fact[a],
        )
    }
}
