//! Predictive CDFs for the realized loss `Z | X = x`.
//!
//! An engine answers "the `S` CDF draws of the loss at `(x, z)`". Work that
//! depends only on `x` (neighbor search, local moments) is done once in
//! [`LossCdf::local`]; the returned [`LocalCdf`] is then evaluated at many `z`
//! during inversion. Draws are aggregated either by their mean (posterior
//! predictive) or by a lower `gamma`-quantile envelope.

mod constant;
mod ensemble;
mod knn_empirical;
mod oracle;

pub use constant::ExponentialCdf;
pub use ensemble::{BootstrapEnsemble, GaussianMembers};
pub use knn_empirical::{EmpiricalStep, KnnEmpirical};
pub use oracle::{OracleEngine, OracleLocal};

use crate::error::{LocusError, Result};
use crate::quantile::higher_rank;
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

/// Lower bound on member scales, in standardized loss units.
pub const SCALE_FLOOR: f64 = 1e-6;

/// The CDF draws of one engine at one fixed `x`.
pub trait LocalCdf {
    fn n_draws(&self) -> usize;

    /// Clears `out` and writes the `S` draw CDFs at `z`.
    fn fill_draws(&self, z: f64, out: &mut Vec<f64>);
}

/// How draws are combined into a single CDF `F~(z | x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Aggregation {
    Mean,
    /// Order statistic at rank `ceil(gamma * S)` of the draws.
    Envelope(f64),
}

impl Aggregation {
    pub fn validate(self) -> Result<Self> {
        if let Aggregation::Envelope(g) = self {
            if !(g > 0.0 && g <= 1.0) {
                return Err(LocusError::invalid(format!("envelope gamma {g} outside (0, 1]")));
            }
        }
        Ok(self)
    }

    /// Aggregated CDF at `z`; `buf` is scratch space.
    pub fn eval<L: LocalCdf + ?Sized>(self, local: &L, z: f64, buf: &mut Vec<f64>) -> f64 {
        local.fill_draws(z, buf);
        match self {
            Aggregation::Mean => mean_of(buf),
            Aggregation::Envelope(gamma) => envelope_of(buf, gamma),
        }
    }
}

pub fn mean_of(draws: &[f64]) -> f64 {
    draws.iter().sum::<f64>() / draws.len() as f64
}

/// Envelope of draws (reorders `draws`).
pub fn envelope_of(draws: &mut [f64], gamma: f64) -> f64 {
    let k = higher_rank(gamma, draws.len()) - 1;
    let (_, v, _) = draws.select_nth_unstable_by(k, f64::total_cmp);
    *v
}

/// A fitted Step-2 model.
pub trait LossCdf: Send + Sync {
    type Local: LocalCdf + Send + Sync;

    fn local(&self, x: &[f64]) -> Self::Local;

    fn n_draws(&self) -> usize;

    /// Typical loss magnitude (largest training loss); initial inversion
    /// bracket.
    fn scale_hint(&self) -> f64;

    fn cdf_draws(&self, x: &[f64], z: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_draws());
        self.local(x).fill_draws(z, &mut out);
        out
    }

    fn mean_cdf(&self, x: &[f64], z: f64) -> f64 {
        mean_of(&self.cdf_draws(x, z))
    }

    fn envelope_cdf(&self, x: &[f64], z: f64, gamma: f64) -> Result<f64> {
        Aggregation::Envelope(gamma).validate()?;
        let mut d = self.cdf_draws(x, z);
        Ok(envelope_of(&mut d, gamma))
    }
}

/// Engine choice and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EngineSpec {
    BootstrapGaussianEnsemble {
        #[serde(default = "default_members")]
        members: usize,
        /// Defaults to `min(50, n1 / 4)`.
        #[serde(default)]
        k_local: Option<usize>,
    },
    KnnEmpirical {
        #[serde(default = "default_k_empirical")]
        k: usize,
    },
}

fn default_members() -> usize {
    30
}

fn default_k_empirical() -> usize {
    100
}

impl Default for EngineSpec {
    fn default() -> Self {
        EngineSpec::BootstrapGaussianEnsemble {
            members: default_members(),
            k_local: None,
        }
    }
}

/// The serializable engines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossCdfEngine {
    BootstrapGaussianEnsemble(BootstrapEnsemble),
    KnnEmpirical(KnnEmpirical),
}

pub enum EngineLocal {
    Members(GaussianMembers),
    Step(EmpiricalStep),
}

impl LocalCdf for EngineLocal {
    fn n_draws(&self) -> usize {
        match self {
            EngineLocal::Members(m) => m.n_draws(),
            EngineLocal::Step(s) => s.n_draws(),
        }
    }

    fn fill_draws(&self, z: f64, out: &mut Vec<f64>) {
        match self {
            EngineLocal::Members(m) => m.fill_draws(z, out),
            EngineLocal::Step(s) => s.fill_draws(z, out),
        }
    }
}

impl LossCdfEngine {
    /// Fits on the D1 loss data `(x, z)`; `seed` drives bootstrap resampling.
    pub fn fit(x: ArrayView2<'_, f64>, z: &[f64], spec: &EngineSpec, seed: u64) -> Result<Self> {
        if x.nrows() != z.len() {
            return Err(LocusError::LengthMismatch(format!(
                "{} feature rows but {} losses",
                x.nrows(),
                z.len()
            )));
        }
        if let Some(bad) = z.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(LocusError::invalid(format!("losses must be finite and nonnegative, found {bad}")));
        }
        match *spec {
            EngineSpec::BootstrapGaussianEnsemble { members, k_local } => {
                BootstrapEnsemble::fit(x, z, members, k_local, seed).map(LossCdfEngine::BootstrapGaussianEnsemble)
            }
            EngineSpec::KnnEmpirical { k } => KnnEmpirical::fit(x, z, k).map(LossCdfEngine::KnnEmpirical),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            LossCdfEngine::BootstrapGaussianEnsemble(e) => e.n_features(),
            LossCdfEngine::KnnEmpirical(e) => e.n_features(),
        }
    }
}

impl LossCdf for LossCdfEngine {
    type Local = EngineLocal;

    fn local(&self, x: &[f64]) -> EngineLocal {
        match self {
            LossCdfEngine::BootstrapGaussianEnsemble(e) => EngineLocal::Members(e.local(x)),
            LossCdfEngine::KnnEmpirical(e) => EngineLocal::Step(e.local(x)),
        }
    }

    fn n_draws(&self) -> usize {
        match self {
            LossCdfEngine::BootstrapGaussianEnsemble(e) => e.n_draws(),
            LossCdfEngine::KnnEmpirical(e) => e.n_draws(),
        }
    }

    fn scale_hint(&self) -> f64 {
        match self {
            LossCdfEngine::BootstrapGaussianEnsemble(e) => e.scale_hint(),
            LossCdfEngine::KnnEmpirical(e) => e.scale_hint(),
        }
    }
}
