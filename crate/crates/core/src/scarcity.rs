//! Design-density scarcity index and the trimming level `gamma(x)`.
//!
//! `r_k(x)` is the distance from `x` to its `k`-th nearest D1 point. It is
//! standardized against the median and 0.9-quantile of the in-sample radii,
//!
//! ```text
//! s(x)     = (r_k(x) - q_lo) / (q_hi - q_lo + eps)
//! gamma(x) = gamma_max - (gamma_max - gamma_min) * logistic((s(x) - m) / s_gamma)
//! ```
//!
//! so sparse regions get a small `gamma` and hence a lower, more conservative
//! envelope. In-sample radii count the point itself as its own first
//! neighbor.

use crate::error::{LocusError, Result};
use crate::knn::BruteForceIndex;
use crate::quantile::{sort_reals, sorted_quantile};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaConstants {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub midpoint: f64,
    pub slope_scale: f64,
    pub eps: f64,
}

impl Default for GammaConstants {
    fn default() -> Self {
        Self {
            gamma_min: 0.15,
            gamma_max: 0.9,
            midpoint: 0.0,
            slope_scale: 1.0,
            eps: 1e-6,
        }
    }
}

impl GammaConstants {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma_min > 0.0
            && self.gamma_min < self.gamma_max
            && self.gamma_max <= 1.0
            && self.slope_scale > 0.0
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(LocusError::invalid(format!("invalid gamma constants {self:?}")))
        }
    }

    /// `gamma` as a function of the standardized scarcity score.
    pub fn gamma_from_score(&self, s: f64) -> f64 {
        let u = (s - self.midpoint) / self.slope_scale;
        let logistic = 1.0 / (1.0 + (-u).exp());
        self.gamma_max - (self.gamma_max - self.gamma_min) * logistic
    }
}

/// Settings for building a [`ScarcityIndex`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScarcitySpec {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub constants: GammaConstants,
}

fn default_k() -> usize {
    50
}

impl Default for ScarcitySpec {
    fn default() -> Self {
        Self {
            k: default_k(),
            constants: GammaConstants::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScarcityIndex {
    reference: BruteForceIndex,
    k: usize,
    q_lo: f64,
    q_hi: f64,
    constants: GammaConstants,
}

impl ScarcityIndex {
    pub fn build(points: ArrayView2<'_, f64>, k: usize, constants: GammaConstants) -> Result<Self> {
        constants.validate()?;
        let n = points.nrows();
        if k == 0 {
            return Err(LocusError::invalid("scarcity k must be positive"));
        }
        if k > n {
            return Err(LocusError::TooFewPoints { required: k, available: n });
        }
        let reference = BruteForceIndex::new(points.to_owned());
        let mut radii: Vec<f64> = points
            .outer_iter()
            .map(|row| reference.kth_distance(&row.to_vec(), k))
            .collect();
        sort_reals(&mut radii);
        Ok(Self {
            q_lo: sorted_quantile(&radii, 0.5),
            q_hi: sorted_quantile(&radii, 0.9),
            reference,
            k,
            constants,
        })
    }

    pub fn from_spec(points: ArrayView2<'_, f64>, spec: &ScarcitySpec) -> Result<Self> {
        Self::build(points, spec.k, spec.constants)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn q_lo(&self) -> f64 {
        self.q_lo
    }

    pub fn q_hi(&self) -> f64 {
        self.q_hi
    }

    pub fn constants(&self) -> &GammaConstants {
        &self.constants
    }

    pub fn reference_points(&self) -> Array2<f64> {
        self.reference.points().to_owned()
    }

    pub fn n_features(&self) -> usize {
        self.reference.dim()
    }

    /// `r_k(x)`.
    pub fn radius(&self, x: &[f64]) -> f64 {
        self.reference.kth_distance(x, self.k)
    }

    pub fn score_from_radius(&self, r: f64) -> f64 {
        (r - self.q_lo) / (self.q_hi - self.q_lo + self.constants.eps)
    }

    /// `s(x)`.
    pub fn scarcity_score(&self, x: &[f64]) -> f64 {
        self.score_from_radius(self.radius(x))
    }

    pub fn gamma_from_radius(&self, r: f64) -> f64 {
        self.constants.gamma_from_score(self.score_from_radius(r))
    }

    /// `gamma(x)`.
    pub fn gamma(&self, x: &[f64]) -> f64 {
        self.constants.gamma_from_score(self.scarcity_score(x))
    }
}
