//! Strata-aware loss: logarithmic inside the ground truth's bin, linear outside.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::stratify::Bin;

/// Weights for the bin loss and its combination with a model loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the logarithmic (inside-bin) branch.
    pub lambda1: f64,
    /// Weight of the bin loss when added to the model loss.
    pub lambda2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }
}

impl LossConfig {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        let valid = |w: f64| w.is_finite() && w >= 0.0;
        if !valid(lambda1) || !valid(lambda2) {
            return Err(validation(format!(
                "loss weights must be finite and non-negative, got ({lambda1}, {lambda2})"
            )));
        }
        Ok(Self { lambda1, lambda2 })
    }
}

fn check(y: f64, bin: Bin) -> Result<()> {
    if !bin.contains_real(y) {
        return Err(Error::OutsideBin {
            y,
            lo: bin.lo,
            hi: bin.hi,
        });
    }
    Ok(())
}

/// `λ1·ln(1 + |y − ŷ|)` when `ŷ` lies in `bin` (closed), otherwise `|y − ŷ|`.
///
/// `bin` must contain the ground truth `y`.
pub fn bin_loss(y: f64, y_hat: f64, bin: Bin, lambda1: f64) -> Result<f64> {
    check(y, bin)?;
    let err = (y - y_hat).abs();
    Ok(if bin.contains_real(y_hat) {
        lambda1 * err.ln_1p()
    } else {
        err
    })
}

/// `model_loss + λ2 · bin_loss`.
pub fn combined_loss(model_loss: f64, y: f64, y_hat: f64, bin: Bin, cfg: &LossConfig) -> Result<f64> {
    if !model_loss.is_finite() {
        return Err(validation(format!("model loss must be finite, got {model_loss}")));
    }
    Ok(model_loss + cfg.lambda2 * bin_loss(y, y_hat, bin, cfg.lambda1)?)
}

/// Derivative of [`bin_loss`] with respect to `ŷ`.
///
/// At `ŷ = y` this returns 0; on the bin edges the inside-branch value is
/// returned.
pub fn bin_loss_subgradient(y: f64, y_hat: f64, bin: Bin, lambda1: f64) -> Result<f64> {
    check(y, bin)?;
    let diff = y_hat - y;
    if diff == 0.0 {
        return Ok(0.0);
    }
    let sign = diff.signum();
    Ok(if bin.contains_real(y_hat) {
        lambda1 * sign / (1.0 + diff.abs())
    } else {
        sign
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const BIN: Bin = Bin { lo: 40, hi: 50 };

    #[test]
    fn scenario_values() {
        assert_eq!(bin_loss(45.0, 45.0, BIN, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(bin_loss(45.0, 48.0, BIN, 1.0).unwrap(), 4f64.ln(), epsilon = 1e-15);
        assert_eq!(bin_loss(45.0, 60.0, BIN, 1.0).unwrap(), 15.0);
        // edges belong to the logarithmic branch
        assert_abs_diff_eq!(bin_loss(45.0, 50.0, BIN, 1.0).unwrap(), 6f64.ln(), epsilon = 1e-15);
        assert_eq!(bin_loss(45.0, 50.5, BIN, 1.0).unwrap(), 5.5);
    }

    #[test]
    fn ground_truth_must_be_in_bin() {
        assert!(matches!(bin_loss(39.0, 45.0, BIN, 1.0), Err(Error::OutsideBin { .. })));
        assert!(bin_loss_subgradient(51.0, 45.0, BIN, 1.0).is_err());
    }

    #[test]
    fn combined_values() {
        let cfg = LossConfig::default();
        let v = combined_loss(2.0, 45.0, 48.0, BIN, &cfg).unwrap();
        assert_abs_diff_eq!(v, 2.0 + 4f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 3.3863, epsilon = 1e-4);

        let off = LossConfig::new(1.0, 0.0).unwrap();
        assert_eq!(combined_loss(2.0, 45.0, 60.0, BIN, &off).unwrap(), 2.0);
        let small = LossConfig::new(1.0, 0.01).unwrap();
        assert_abs_diff_eq!(combined_loss(2.0, 45.0, 60.0, BIN, &small).unwrap(), 2.15, epsilon = 1e-12);
        assert!(combined_loss(f64::NAN, 45.0, 45.0, BIN, &cfg).is_err());
        assert!(LossConfig::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn subgradient_values() {
        assert_abs_diff_eq!(bin_loss_subgradient(45.0, 48.0, BIN, 1.0).unwrap(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(bin_loss_subgradient(45.0, 40.0, BIN, 1.0).unwrap(), -1.0 / 6.0, epsilon = 1e-15);
        assert_eq!(bin_loss_subgradient(45.0, 60.0, BIN, 1.0).unwrap(), 1.0);
        assert_eq!(bin_loss_subgradient(45.0, 45.0, BIN, 1.0).unwrap(), 0.0);
        assert_eq!(bin_loss_subgradient(45.0, 10.0, BIN, 3.0).unwrap(), -1.0);
    }

    #[test]
    fn log_branch_never_exceeds_linear_for_unit_weight() {
        for i in 0..=2000 {
            let e = i as f64 * 0.05;
            assert!(e.ln_1p() <= e);
        }
    }

    #[test]
    fn minimum_at_ground_truth() {
        for lambda1 in [0.5, 1.0, 10.0, 100.0] {
            for i in 0..=400 {
                let y_hat = 20.0 + i as f64 * 0.1;
                assert!(bin_loss(45.0, y_hat, BIN, lambda1).unwrap() >= 0.0);
                if y_hat != 45.0 {
                    assert!(bin_loss(45.0, y_hat, BIN, lambda1).unwrap() > 0.0);
                }
            }
        }
    }
}
