//! Standard normal helpers with accurate tails.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal CDF.
pub fn cdf(u: f64) -> f64 {
    0.5 * erfc(-u * FRAC_1_SQRT_2)
}

/// `ln Phi(u)`, accurate far into the lower tail.
pub fn log_cdf(u: f64) -> f64 {
    if u > -30.0 {
        cdf(u).ln()
    } else {
        // asymptotic Mills-ratio series
        let u2 = u * u;
        let series = 1.0 - 1.0 / u2 + 3.0 / (u2 * u2) - 15.0 / (u2 * u2 * u2);
        -0.5 * u2 - (-u).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}

/// CDF of `N(mean, sd^2)` truncated to `[0, inf)`, evaluated at `z`.
///
/// `F(z) = 1 - Phi((mean - z)/sd) / Phi(mean/sd)` for `z >= 0`, computed in
/// log space so that members whose mass sits far below zero still give a
/// proper CDF.
pub fn truncated_cdf(z: f64, mean: f64, sd: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    let log_num = log_cdf((mean - z) / sd);
    let log_den = log_cdf(mean / sd);
    let v = 1.0 - (log_num - log_den).exp();
    v.clamp(0.0, 1.0)
}
