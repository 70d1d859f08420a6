//! Tabular data, CSV ingestion, standardization, the four-way split protocol
//! and synthetic generators with known conditional loss laws.

mod csv_io;
mod split;
mod standardize;
pub mod synthetic;

pub use csv_io::{load_csv, load_features_csv, write_csv};
pub use split::{make_splits, SplitDataset, SplitIndices, SplitFractions};
pub use standardize::Standardizer;
pub use synthetic::{generate_synthetic, SyntheticOracle, SyntheticSpec};

use crate::error::{LocusError, Result};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

/// Covariates plus a real-valued target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularData {
    pub features: Array2<f64>,
    pub target: Array1<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
}

impl TabularData {
    pub fn new(
        features: Array2<f64>,
        target: Array1<f64>,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        let (n, p) = features.dim();
        if n == 0 || p == 0 {
            return Err(LocusError::invalid(format!("data must have at least one row and one feature (got {n}x{p})")));
        }
        if target.len() != n {
            return Err(LocusError::LengthMismatch(format!(
                "target has {} entries, features have {n} rows",
                target.len()
            )));
        }
        if feature_names.len() != p {
            return Err(LocusError::LengthMismatch(format!(
                "{} feature names for {p} columns",
                feature_names.len()
            )));
        }
        if let Some(((r, c), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(LocusError::Cell {
                row: r,
                column: feature_names[c].clone(),
                message: "non-finite value".into(),
            });
        }
        let target_name = target_name.into();
        if let Some((r, _)) = target.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(LocusError::Cell {
                row: r,
                column: target_name,
                message: "non-finite value".into(),
            });
        }
        Ok(Self {
            features,
            target,
            feature_names,
            target_name,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Rows selected by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> TabularData {
        TabularData {
            features: self.features.select(Axis(0), indices),
            target: self.target.select(Axis(0), indices),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
        }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.row(i).to_vec()
    }
}
