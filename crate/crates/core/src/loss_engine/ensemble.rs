use super::{LocalCdf, LossCdf, SCALE_FLOOR};
use crate::error::{LocusError, Result};
use crate::gaussian::truncated_cdf;
use crate::knn::{BruteForceIndex, Neighbor};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Bootstrap ensemble of local Gaussian loss models.
///
/// Member `s` is fitted on a bootstrap resample of D1. At a query `x` it takes
/// the `k_local` nearest resampled points (counting multiplicity), and its CDF
/// is `N(m(x), s(x)^2)` truncated to `[0, inf)` where `m`, `s` are the local
/// mean and population sd of their losses (sd floored at [`SCALE_FLOOR`]).
/// Members differ only through their resamples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "EnsembleState", into = "EnsembleState")]
pub struct BootstrapEnsemble {
    index: BruteForceIndex,
    losses: Vec<f64>,
    k_local: usize,
    seed: u64,
    resamples: Vec<Vec<u32>>,
    /// `counts[s][i]`: multiplicity of D1 row `i` in resample `s`.
    counts: Vec<Vec<u32>>,
    max_loss: f64,
}

#[derive(Serialize, Deserialize)]
struct EnsembleState {
    points: Array2<f64>,
    losses: Vec<f64>,
    k_local: usize,
    seed: u64,
    resamples: Vec<Vec<u32>>,
}

impl From<EnsembleState> for BootstrapEnsemble {
    fn from(s: EnsembleState) -> Self {
        BootstrapEnsemble::assemble(BruteForceIndex::new(s.points), s.losses, s.k_local, s.seed, s.resamples)
    }
}

impl From<BootstrapEnsemble> for EnsembleState {
    fn from(e: BootstrapEnsemble) -> Self {
        EnsembleState {
            points: e.index.points().to_owned(),
            losses: e.losses,
            k_local: e.k_local,
            seed: e.seed,
            resamples: e.resamples,
        }
    }
}

/// `min(50, n / 4)`, at least 1.
pub fn default_k_local(n: usize) -> usize {
    50.min(n / 4).max(1)
}

impl BootstrapEnsemble {
    pub fn fit(x: ArrayView2<'_, f64>, z: &[f64], members: usize, k_local: Option<usize>, seed: u64) -> Result<Self> {
        let n = z.len();
        if members == 0 {
            return Err(LocusError::invalid("ensemble needs at least one member"));
        }
        let k_local = k_local.unwrap_or_else(|| default_k_local(n));
        if k_local == 0 {
            return Err(LocusError::invalid("k_local must be positive"));
        }
        let required = k_local.max(2);
        if n < required {
            return Err(LocusError::TooFewPoints { required, available: n });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let resamples = (0..members)
            .map(|_| (0..n).map(|_| rng.random_range(0..n as u32)).collect())
            .collect();
        Ok(Self::assemble(
            BruteForceIndex::new(x.to_owned()),
            z.to_vec(),
            k_local,
            seed,
            resamples,
        ))
    }

    fn assemble(index: BruteForceIndex, losses: Vec<f64>, k_local: usize, seed: u64, resamples: Vec<Vec<u32>>) -> Self {
        let n = losses.len();
        let counts = resamples
            .iter()
            .map(|r| {
                let mut c = vec![0u32; n];
                for &i in r {
                    c[i as usize] += 1;
                }
                c
            })
            .collect();
        let max_loss = losses.iter().copied().fold(0.0, f64::max);
        Self {
            index,
            losses,
            k_local,
            seed,
            resamples,
            counts,
            max_loss,
        }
    }

    pub fn members(&self) -> usize {
        self.resamples.len()
    }

    pub fn k_local(&self) -> usize {
        self.k_local
    }

    pub fn n_features(&self) -> usize {
        self.index.dim()
    }

    /// Local (mean, sd) of member `s` from a distance-sorted neighbor list.
    /// `None` when the list holds fewer than `k_local` resampled points.
    fn member_moments(&self, s: usize, neighbors: &[Neighbor], taken: &mut Vec<(f64, u32)>) -> Option<(f64, f64)> {
        taken.clear();
        let counts = &self.counts[s];
        let mut remaining = self.k_local as u32;
        for nb in neighbors {
            let c = counts[nb.index];
            if c == 0 {
                continue;
            }
            let w = c.min(remaining);
            taken.push((self.losses[nb.index], w));
            remaining -= w;
            if remaining == 0 {
                break;
            }
        }
        if remaining > 0 {
            return None;
        }
        let k = self.k_local as f64;
        let mean = taken.iter().map(|&(z, w)| z * w as f64).sum::<f64>() / k;
        let var = taken
            .iter()
            .map(|&(z, w)| {
                let d = z - mean;
                d * d * w as f64
            })
            .sum::<f64>()
            / k;
        Some((mean, var.sqrt().max(SCALE_FLOOR)))
    }
}

/// Per-member truncated Gaussian parameters at a fixed `x`.
#[derive(Debug, Clone)]
pub struct GaussianMembers {
    pub params: Vec<(f64, f64)>,
}

impl LocalCdf for GaussianMembers {
    fn n_draws(&self) -> usize {
        self.params.len()
    }

    fn fill_draws(&self, z: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.params.iter().map(|&(m, s)| truncated_cdf(z, m, s)));
    }
}

impl LossCdf for BootstrapEnsemble {
    type Local = GaussianMembers;

    fn local(&self, x: &[f64]) -> GaussianMembers {
        // Resamples hold about 63% of D1 rows, so a window of a few times
        // k_local nearest rows almost always suffices.
        let window = (4 * self.k_local + 64).min(self.index.len());
        let near = self.index.k_nearest(x, window);
        let mut full: Option<Vec<Neighbor>> = None;
        let mut taken = Vec::with_capacity(self.k_local);
        let params = (0..self.members())
            .map(|s| {
                if let Some(p) = self.member_moments(s, &near, &mut taken) {
                    return p;
                }
                let all = full.get_or_insert_with(|| self.index.sorted_all(x));
                self.member_moments(s, all, &mut taken)
                    .expect("resample holds n >= k_local points")
            })
            .collect();
        GaussianMembers { params }
    }

    fn n_draws(&self) -> usize {
        self.members()
    }

    fn scale_hint(&self) -> f64 {
        self.max_loss
    }
}
