use super::TabularData;
use crate::error::{LocusError, Result};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

/// Column-wise affine standardization fitted on one split and applied
/// unchanged to the others. Uses the population sd (divide by `n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub feature_means: Vec<f64>,
    pub feature_sds: Vec<f64>,
    pub target_mean: f64,
    pub target_sd: f64,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Standardizer {
    pub fn fit(data: &TabularData) -> Result<Self> {
        let mut feature_means = Vec::with_capacity(data.n_features());
        let mut feature_sds = Vec::with_capacity(data.n_features());
        for (j, col) in data.features.axis_iter(Axis(1)).enumerate() {
            let (m, s) = mean_sd(col.iter().copied());
            if !(s > 0.0) || s < 1e-12 * m.abs().max(1.0) {
                return Err(LocusError::ConstantColumn(data.feature_names[j].clone()));
            }
            feature_means.push(m);
            feature_sds.push(s);
        }
        let (target_mean, target_sd) = mean_sd(data.target.iter().copied());
        if !(target_sd > 0.0) || target_sd < 1e-12 * target_mean.abs().max(1.0) {
            return Err(LocusError::ConstantColumn(data.target_name.clone()));
        }
        Ok(Self {
            feature_means,
            feature_sds,
            target_mean,
            target_sd,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_means.len()
    }

    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.feature_means.iter().zip(&self.feature_sds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn transform_features(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.outer_iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.feature_means[j]) / self.feature_sds[j];
            }
        }
        out
    }

    pub fn inverse_features(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.outer_iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.feature_sds[j] + self.feature_means[j];
            }
        }
        out
    }

    pub fn transform_target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_sd
    }

    pub fn inverse_target(&self, y: f64) -> f64 {
        y * self.target_sd + self.target_mean
    }

    pub fn transform(&self, data: &TabularData) -> Result<TabularData> {
        if data.n_features() != self.n_features() {
            return Err(LocusError::ColumnMismatch(format!(
                "standardizer fitted on {} features, data has {}",
                self.n_features(),
                data.n_features()
            )));
        }
        let target: Array1<f64> = data.target.mapv(|y| self.transform_target(y));
        Ok(TabularData {
            features: self.transform_features(&data.features),
            target,
            feature_names: data.feature_names.clone(),
            target_name: data.target_name.clone(),
        })
    }

    pub fn inverse(&self, data: &TabularData) -> TabularData {
        TabularData {
            features: self.inverse_features(&data.features),
            target: data.target.mapv(|y| self.inverse_target(y)),
            feature_names: data.feature_names.clone(),
            target_name: data.target_name.clone(),
        }
    }
}
