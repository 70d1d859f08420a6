use super::{LocalCdf, LossCdf};
use serde::{Deserialize, Serialize};

/// `F(z | x) = 1 - exp(-z / scale)` for every `x`: a deliberately
/// misspecified engine that ignores the covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialCdf {
    pub scale: f64,
}

impl LocalCdf for ExponentialCdf {
    fn n_draws(&self) -> usize {
        1
    }

    fn fill_draws(&self, z: f64, out: &mut Vec<f64>) {
        out.clear();
        out.push(if z <= 0.0 { 0.0 } else { -(-z / self.scale).exp_m1() });
    }
}

impl LossCdf for ExponentialCdf {
    type Local = ExponentialCdf;

    fn local(&self, _x: &[f64]) -> ExponentialCdf {
        *self
    }

    fn n_draws(&self) -> usize {
        1
    }

    fn scale_hint(&self) -> f64 {
        self.scale
    }
}
