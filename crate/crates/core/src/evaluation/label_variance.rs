//! Label-variance baseline: `max(0, E(Y^2|x) - E(Y|x)^2)` from the `k_local`
//! nearest training labels.

use crate::error::{LocusError, Result};
use crate::knn::BruteForceIndex;
use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelVariance {
    index: BruteForceIndex,
    targets: Array1<f64>,
    k: usize,
}

impl LabelVariance {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[f64], k_local: usize) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(LocusError::LengthMismatch(format!("{} rows but {} labels", x.nrows(), y.len())));
        }
        if k_local == 0 || k_local > y.len() {
            return Err(LocusError::invalid(format!(
                "k_local {k_local} must lie in [1, {}]",
                y.len()
            )));
        }
        Ok(Self {
            index: BruteForceIndex::new(x.to_owned()),
            targets: Array1::from(y.to_vec()),
            k: k_local,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn variance(&self, x: &[f64]) -> f64 {
        let nb = self.index.k_nearest(x, self.k);
        let kf = nb.len() as f64;
        let (s1, s2) = nb.iter().fold((0.0, 0.0), |(s1, s2), n| {
            let y = self.targets[n.index];
            (s1 + y, s2 + y * y)
        });
        let mean = s1 / kf;
        (s2 / kf - mean * mean).max(0.0)
    }

    /// Conditional standard deviation estimate `sqrt(variance)`.
    pub fn sd(&self, x: &[f64]) -> f64 {
        self.variance(x).sqrt()
    }
}
