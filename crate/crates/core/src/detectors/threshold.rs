use alloc::format;

use crate::error::{Error, Result};
use crate::stats::{quantile_sorted, sorted};

pub const DEFAULT_QUANTILE: f64 = 0.99;
pub const MIN_CALIBRATION_SCORES: usize = 20;

/// Empirical `quantile` of reference scores, interpolated the same way as the
/// feature percentiles.
pub fn calibrate_threshold(scores: &[f64], quantile: f64) -> Result<f64> {
    if scores.len() < MIN_CALIBRATION_SCORES {
        return Err(Error::InsufficientData { needed: MIN_CALIBRATION_SCORES, got: scores.len() });
    }
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(Error::invalid(format!("quantile {quantile} outside (0, 1]")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("calibration scores must be finite"));
    }
    Ok(quantile_sorted(&sorted(scores), quantile))
}
