use super::{LocalCdf, LossCdf};
use crate::error::{LocusError, Result};
use crate::knn::BruteForceIndex;
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

/// Uniform-weight empirical CDF of the losses of the `k` nearest D1 points.
/// A single draw; right-continuous step function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnEmpirical {
    index: BruteForceIndex,
    losses: Vec<f64>,
    k: usize,
}

impl KnnEmpirical {
    /// `k` is clipped to `|D1|`.
    pub fn fit(x: ArrayView2<'_, f64>, z: &[f64], k: usize) -> Result<Self> {
        if k == 0 {
            return Err(LocusError::invalid("knn_empirical needs k >= 1"));
        }
        if z.len() < 2 {
            return Err(LocusError::TooFewPoints {
                required: 2,
                available: z.len(),
            });
        }
        Ok(Self {
            index: BruteForceIndex::new(x.to_owned()),
            losses: z.to_vec(),
            k: k.min(z.len()),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_features(&self) -> usize {
        self.index.dim()
    }
}

#[derive(Debug, Clone)]
pub struct EmpiricalStep {
    pub sorted: Vec<f64>,
}

impl EmpiricalStep {
    pub fn cdf(&self, z: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= z) as f64 / self.sorted.len() as f64
    }
}

impl LocalCdf for EmpiricalStep {
    fn n_draws(&self) -> usize {
        1
    }

    fn fill_draws(&self, z: f64, out: &mut Vec<f64>) {
        out.clear();
        out.push(self.cdf(z));
    }
}

impl LossCdf for KnnEmpirical {
    type Local = EmpiricalStep;

    fn local(&self, x: &[f64]) -> EmpiricalStep {
        let mut sorted: Vec<f64> = self
            .index
            .k_nearest(x, self.k)
            .iter()
            .map(|n| self.losses[n.index])
            .collect();
        sorted.sort_unstable_by(f64::total_cmp);
        EmpiricalStep { sorted }
    }

    fn n_draws(&self) -> usize {
        1
    }

    fn scale_hint(&self) -> f64 {
        self.losses.iter().copied().fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn all_neighbors_gives_global_ecdf() {
        let x = Array2::from_shape_fn((6, 2), |(i, j)| (i * (j + 1)) as f64);
        let z = [0.5, 0.1, 0.9, 0.3, 0.3, 2.0];
        let e = KnnEmpirical::fit(x.view(), &z, 6).unwrap();
        for q in [[0.0, 0.0], [100.0, -3.0]] {
            assert_eq!(e.mean_cdf(&q, 0.3), 3.0 / 6.0);
            assert_eq!(e.mean_cdf(&q, 0.29), 1.0 / 6.0);
            assert_eq!(e.mean_cdf(&q, 2.0), 1.0);
            assert_eq!(e.mean_cdf(&q, -1.0), 0.0);
        }
    }

    #[test]
    fn single_draw() {
        let x = Array2::from_shape_fn((5, 1), |(i, _)| i as f64);
        let e = KnnEmpirical::fit(x.view(), &[1.0, 2.0, 3.0, 4.0, 5.0], 2).unwrap();
        let d = e.cdf_draws(&[0.0], 1.5);
        assert_eq!(d, vec![0.5]);
        assert_eq!(e.mean_cdf(&[0.0], 1.5), 0.5);
    }
}
