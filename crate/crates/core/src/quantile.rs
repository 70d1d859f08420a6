//! Project-wide empirical quantile convention.
//!
//! Every empirical quantile (tau rule, envelope over draws, scarcity
//! reference radii, matched acceptance, benchmark percentiles) uses the higher
//! order statistic: the value at 1-based rank `ceil(level * m)` of the sorted
//! sample. The conformal level uses rank `ceil((1 - alpha)(n + 1))`.

use crate::error::{LocusError, Result};

/// Slack absorbing representation error in `level * m` (e.g. `0.7 * 10`
/// evaluates to `7.000000000000001`).
const RANK_SLACK: f64 = 1e-9;

/// `ceil(x)` tolerant to floating-point noise just above an integer.
pub fn ceil_rank(x: f64) -> usize {
    let r = (x - RANK_SLACK).ceil();
    if r <= 0.0 {
        0
    } else {
        r as usize
    }
}

/// 1-based rank `ceil(level * m)` clamped to `[1, m]`.
pub fn higher_rank(level: f64, m: usize) -> usize {
    ceil_rank(level * m as f64).clamp(1, m.max(1))
}

/// Empirical `level`-quantile of an already sorted slice.
pub fn sorted_quantile(sorted: &[f64], level: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    sorted[higher_rank(level, sorted.len()) - 1]
}

/// Empirical `level`-quantile of an unsorted sample.
pub fn quantile(values: &[f64], level: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(LocusError::invalid("quantile of an empty sample"));
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(LocusError::invalid(format!("quantile level {level} outside (0, 1]")));
    }
    let mut buf = values.to_vec();
    let k = higher_rank(level, buf.len()) - 1;
    let (_, v, _) = buf.select_nth_unstable_by(k, f64::total_cmp);
    Ok(*v)
}

/// Sorts a vector of reals in place (total order, NaN last).
pub fn sort_reals(v: &mut [f64]) {
    v.sort_unstable_by(f64::total_cmp);
}
