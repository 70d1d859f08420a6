use super::{LocalCdf, LossCdf};
use crate::dataset::{Standardizer, SyntheticOracle};
use crate::predictors::{LossFunction, Predictor};

/// The true conditional loss CDF of a synthetic problem, expressed on the
/// standardized scale the pipeline works in. Used as a reference engine.
#[derive(Debug, Clone)]
pub struct OracleEngine {
    pub oracle: SyntheticOracle,
    pub predictor: Predictor,
    pub standardizer: Standardizer,
    pub loss: LossFunction,
}

#[derive(Debug, Clone)]
pub struct OracleLocal {
    oracle: SyntheticOracle,
    x_raw: Vec<f64>,
    prediction_raw: f64,
    loss: LossFunction,
    target_sd: f64,
}

impl OracleLocal {
    pub fn cdf(&self, z_std: f64) -> f64 {
        let z = self.loss.to_raw_scale(z_std, self.target_sd);
        self.oracle.loss_cdf(&self.x_raw, self.prediction_raw, self.loss, z)
    }
}

impl LocalCdf for OracleLocal {
    fn n_draws(&self) -> usize {
        1
    }

    fn fill_draws(&self, z: f64, out: &mut Vec<f64>) {
        out.clear();
        out.push(self.cdf(z));
    }
}

impl OracleEngine {
    /// Maps a standardized feature row back to raw units.
    pub fn raw_x(&self, x_std: &[f64]) -> Vec<f64> {
        x_std
            .iter()
            .zip(self.standardizer.feature_means.iter().zip(&self.standardizer.feature_sds))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

impl LossCdf for OracleEngine {
    type Local = OracleLocal;

    fn local(&self, x: &[f64]) -> OracleLocal {
        OracleLocal {
            oracle: self.oracle.clone(),
            x_raw: self.raw_x(x),
            prediction_raw: self.standardizer.inverse_target(self.predictor.predict(x)),
            loss: self.loss,
            target_sd: self.standardizer.target_sd,
        }
    }

    fn n_draws(&self) -> usize {
        1
    }

    fn scale_hint(&self) -> f64 {
        1.0
    }
}
