//! Deployed predictors `g`, loss functions, and the tau rule.
//!
//! Everything downstream treats the predictor as a frozen black box: it is
//! fitted once on the train split and never refit.

use crate::dataset::TabularData;
use crate::error::{LocusError, Result};
use crate::knn::BruteForceIndex;
use crate::quantile;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossFunction {
    #[default]
    Absolute,
    Squared,
}

impl LossFunction {
    pub fn eval(self, prediction: f64, y: f64) -> f64 {
        let d = prediction - y;
        match self {
            LossFunction::Absolute => d.abs(),
            LossFunction::Squared => d * d,
        }
    }

    /// Converts a loss on the standardized target scale to raw target units.
    pub fn to_raw_scale(self, z_standardized: f64, target_sd: f64) -> f64 {
        match self {
            LossFunction::Absolute => z_standardized * target_sd,
            LossFunction::Squared => z_standardized * target_sd * target_sd,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorSpec {
    #[default]
    LinearOls,
    KnnRegressor { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predictor {
    LinearOls {
        coefficients: Vec<f64>,
        intercept: f64,
    },
    KnnRegressor {
        k: usize,
        index: BruteForceIndex,
        targets: Vec<f64>,
    },
}

impl Predictor {
    pub fn fit(train: &TabularData, spec: &PredictorSpec) -> Result<Self> {
        match *spec {
            PredictorSpec::LinearOls => fit_ols(train.features.view(), &train.target.to_vec()),
            PredictorSpec::KnnRegressor { k } => {
                if k == 0 || k > train.n_rows() {
                    return Err(LocusError::invalid(format!(
                        "knn regressor needs 1 <= k <= n_train ({}), got {k}",
                        train.n_rows()
                    )));
                }
                Ok(Predictor::KnnRegressor {
                    k,
                    index: BruteForceIndex::new(train.features.clone()),
                    targets: train.target.to_vec(),
                })
            }
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Predictor::LinearOls { coefficients, .. } => coefficients.len(),
            Predictor::KnnRegressor { index, .. } => index.dim(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Predictor::LinearOls {
                coefficients,
                intercept,
            } => intercept + coefficients.iter().zip(x).map(|(c, v)| c * v).sum::<f64>(),
            Predictor::KnnRegressor { k, index, targets } => {
                let nn = index.k_nearest(x, *k);
                nn.iter().map(|n| targets[n.index]).sum::<f64>() / nn.len() as f64
            }
        }
    }

    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.outer_iter()
            .map(|row| match row.as_slice() {
                Some(s) => self.predict(s),
                None => self.predict(&row.to_vec()),
            })
            .collect()
    }
}

fn fit_ols(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<Predictor> {
    let (n, p) = x.dim();
    if n == 0 {
        return Err(LocusError::TooFewPoints { required: 1, available: 0 });
    }
    let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[[i, j - 1]] });
    let rhs = DVector::from_column_slice(y);
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * (n.max(p + 1) as f64) * f64::EPSILON;
    let rank = svd.rank(tol);
    if rank < p + 1 {
        return Err(LocusError::SingularDesign { rank, required: p + 1 });
    }
    let beta = svd
        .solve(&rhs, tol)
        .map_err(|e| LocusError::invalid(format!("least squares solve failed: {e}")))?;
    Ok(Predictor::LinearOls {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
    })
}

/// `Z_i = L(g(X_i), Y_i)` in row order.
pub fn realized_losses(predictor: &Predictor, loss: LossFunction, data: &TabularData) -> Array1<f64> {
    let preds = predictor.predict_batch(data.features.view());
    preds
        .iter()
        .zip(data.target.iter())
        .map(|(&g, &y)| loss.eval(g, y))
        .collect()
}

/// Loss tolerance `tau` as the empirical `level`-quantile of `losses` (rank
/// `ceil(level * m)`), so that at most a `1 - level` fraction strictly
/// exceeds it.
pub fn tau_from_quantile(losses: &[f64], level: f64) -> Result<f64> {
    if losses.is_empty() {
        return Err(LocusError::invalid("tau rule needs at least one loss"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(LocusError::invalid(format!("tau quantile level {level} outside (0, 1)")));
    }
    quantile::quantile(losses, level)
}
