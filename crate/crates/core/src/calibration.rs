//! Distribution-free calibration of a predictive loss CDF.
//!
//! PIT values `W_i = F~(Z_i | X_i)` are computed on D2. The calibrated level is
//! the order statistic `t = W_(k)` with `k = ceil((1 - alpha)(n2 + 1))`, or
//! `t = 1` when `k > n2`, and the bound is `U_alpha(x) = F~^{-1}(t | x)`.
//!
//! For `t < 1` the inverse is `inf { z : F~(z | x) > t }`, which coincides with
//! `inf { z : F~(z | x) >= t }` for continuous CDFs and, for step CDFs whose
//! steps hit `t` exactly, moves to the next step. Then `W <= t` implies
//! `Z <= U_alpha(X)`, which is what marginal validity rests on. For `t = 1` the
//! inverse is `inf { z : F~(z | x) >= 1 }`.

use crate::error::{LocusError, Result};
use crate::exec::Exec;
use crate::loss_engine::{Aggregation, LocalCdf, LossCdf, LossCdfEngine};
use crate::quantile::{ceil_rank, sort_reals};
use crate::scarcity::ScarcityIndex;
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

/// Bisection tolerance in standardized loss units.
pub const INVERSION_TOL: f64 = 1e-8;
/// Maximum bracket doublings before giving up.
pub const MAX_DOUBLINGS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaSource {
    Fixed { gamma: f64 },
    Scarcity { index: ScarcityIndex },
}

/// How engine draws are turned into `F~`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregationMode {
    Mean,
    Envelope { gamma: GammaSource },
}

impl AggregationMode {
    pub fn validate(&self) -> Result<()> {
        if let AggregationMode::Envelope {
            gamma: GammaSource::Fixed { gamma },
        } = self
        {
            Aggregation::Envelope(*gamma).validate()?;
        }
        Ok(())
    }

    /// The aggregation rule at `x` (resolving `gamma(x)` when scarcity
    /// driven).
    pub fn resolve(&self, x: &[f64]) -> Aggregation {
        match self {
            AggregationMode::Mean => Aggregation::Mean,
            AggregationMode::Envelope { gamma } => Aggregation::Envelope(match gamma {
                GammaSource::Fixed { gamma } => *gamma,
                GammaSource::Scarcity { index } => index.gamma(x),
            }),
        }
    }

    pub fn scarcity(&self) -> Option<&ScarcityIndex> {
        match self {
            AggregationMode::Envelope {
                gamma: GammaSource::Scarcity { index },
            } => Some(index),
            _ => None,
        }
    }
}

/// `F~(. | x)` at one query point, ready for repeated evaluation.
pub struct PreparedCdf<L> {
    local: L,
    aggregation: Aggregation,
    hint: f64,
}

impl<L: LocalCdf> PreparedCdf<L> {
    pub fn new(local: L, aggregation: Aggregation, hint: f64) -> Self {
        Self {
            local,
            aggregation,
            hint,
        }
    }

    pub fn aggregation(&self) -> Aggregation {
        self.aggregation
    }

    pub fn cdf(&self, z: f64) -> f64 {
        let mut buf = Vec::with_capacity(self.local.n_draws());
        self.aggregation.eval(&self.local, z, &mut buf)
    }

    pub fn invert(&self, t: f64) -> Result<f64> {
        let mut buf = Vec::with_capacity(self.local.n_draws());
        invert_cdf(|z| self.aggregation.eval(&self.local, z, &mut buf), t, self.hint)
    }
}

pub fn prepare<E: LossCdf>(engine: &E, mode: &AggregationMode, x: &[f64]) -> PreparedCdf<E::Local> {
    PreparedCdf::new(engine.local(x), mode.resolve(x), engine.scale_hint())
}

/// Generalized inverse of a nondecreasing CDF at level `t`, by bracket
/// expansion from `[0, hint]` and bisection to [`INVERSION_TOL`].
pub fn invert_cdf<F: FnMut(f64) -> f64>(mut cdf: F, t: f64, hint: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(LocusError::invalid(format!("inversion level {t} outside (0, 1]")));
    }
    let reached = |v: f64| if t >= 1.0 { v >= 1.0 } else { v > t };
    let step = if hint > 0.0 && hint.is_finite() { hint } else { 1.0 };
    let (mut lo, mut hi);
    if reached(cdf(0.0)) {
        hi = 0.0;
        lo = -step;
        let mut doublings = 0;
        while reached(cdf(lo)) {
            if doublings == MAX_DOUBLINGS {
                return Err(LocusError::BracketFailed { level: t, doublings });
            }
            hi = lo;
            lo *= 2.0;
            doublings += 1;
        }
    } else {
        lo = 0.0;
        hi = step;
        let mut doublings = 0;
        while !reached(cdf(hi)) {
            if doublings == MAX_DOUBLINGS {
                return Err(LocusError::BracketFailed { level: t, doublings });
            }
            lo = hi;
            hi *= 2.0;
            doublings += 1;
        }
    }
    while hi - lo > INVERSION_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if reached(cdf(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `W_i = F~(Z_i | X_i)` in row order.
pub fn pit_values<E: LossCdf>(
    engine: &E,
    mode: &AggregationMode,
    x: ArrayView2<'_, f64>,
    z: &[f64],
    exec: Exec,
) -> Result<Vec<f64>> {
    if x.nrows() != z.len() {
        return Err(LocusError::LengthMismatch(format!(
            "{} feature rows but {} losses",
            x.nrows(),
            z.len()
        )));
    }
    mode.validate()?;
    Ok(exec.map(z.len(), |i| {
        let row = x.row(i).to_vec();
        prepare(engine, mode, &row).cdf(z[i])
    }))
}

/// `k = ceil((1 - alpha)(n2 + 1))`.
pub fn conformal_rank(n2: usize, alpha: f64) -> usize {
    ceil_rank((1.0 - alpha) * (n2 as f64 + 1.0))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(LocusError::invalid(format!("alpha {alpha} outside (0, 1)")))
    }
}

/// Calibrated level from PIT values already sorted ascending.
pub fn level_from_sorted(sorted: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if sorted.is_empty() {
        return Err(LocusError::invalid("calibration needs at least one PIT value"));
    }
    let k = conformal_rank(sorted.len(), alpha);
    Ok(if k > sorted.len() { 1.0 } else { sorted[k.max(1) - 1] })
}

/// `t_{1-alpha}` from (unsorted) PIT values.
pub fn calibrate_level(w: &[f64], alpha: f64) -> Result<f64> {
    let mut s = w.to_vec();
    sort_reals(&mut s);
    level_from_sorted(&s, alpha)
}

/// A frozen scorer: engine, aggregation mode and calibrated level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedBound<E = LossCdfEngine> {
    engine: E,
    mode: AggregationMode,
    pit_sorted: Vec<f64>,
    alpha: f64,
    t: f64,
}

impl<E: LossCdf> CalibratedBound<E> {
    pub fn calibrate(
        engine: E,
        mode: AggregationMode,
        d2_x: ArrayView2<'_, f64>,
        d2_z: &[f64],
        alpha: f64,
        exec: Exec,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        let mut w = pit_values(&engine, &mode, d2_x, d2_z, exec)?;
        sort_reals(&mut w);
        Self::from_sorted_pits(engine, mode, w, alpha)
    }

    /// Rebuilds a bound from stored, sorted PIT values.
    pub fn from_sorted_pits(engine: E, mode: AggregationMode, pit_sorted: Vec<f64>, alpha: f64) -> Result<Self> {
        if pit_sorted.windows(2).any(|w| w[0] > w[1]) {
            return Err(LocusError::invalid("PIT values must be sorted"));
        }
        if pit_sorted.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(LocusError::invalid("PIT values must lie in [0, 1]"));
        }
        let t = level_from_sorted(&pit_sorted, alpha)?;
        if !(t > 0.0) {
            return Err(LocusError::invalid(format!(
                "calibrated level t = {t}: the engine puts no mass below the calibration losses"
            )));
        }
        Ok(Self {
            engine,
            mode,
            pit_sorted,
            alpha,
            t,
        })
    }

    pub fn engine(&self) -> &E {
        &self.engine
    }

    pub fn mode(&self) -> &AggregationMode {
        &self.mode
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn n2(&self) -> usize {
        self.pit_sorted.len()
    }

    pub fn pit_sorted(&self) -> &[f64] {
        &self.pit_sorted
    }

    /// The calibrated level the same PIT values give at another `alpha`.
    pub fn level_for(&self, alpha: f64) -> Result<f64> {
        level_from_sorted(&self.pit_sorted, alpha)
    }

    pub fn prepare(&self, x: &[f64]) -> PreparedCdf<E::Local> {
        prepare(&self.engine, &self.mode, x)
    }

    /// `gamma(x)` when the mode is an envelope.
    pub fn gamma_at(&self, x: &[f64]) -> Option<f64> {
        match self.mode.resolve(x) {
            Aggregation::Mean => None,
            Aggregation::Envelope(g) => Some(g),
        }
    }

    /// `U_alpha(x)`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.prepare(x).invert(self.t)
    }

    pub fn score_at_level(&self, x: &[f64], t: f64) -> Result<f64> {
        self.prepare(x).invert(t)
    }

    pub fn score_batch(&self, x: ArrayView2<'_, f64>, exec: Exec) -> Result<Vec<f64>> {
        exec.try_map(x.nrows(), |i| self.score(&x.row(i).to_vec()))
    }

    pub fn into_engine(self) -> E {
        self.engine
    }
}

impl<E: LossCdf + Clone> CalibratedBound<E> {
    /// The same engine and PIT values recalibrated at `alpha`.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::from_sorted_pits(self.engine.clone(), self.mode.clone(), self.pit_sorted.clone(), alpha)
    }
}
