//! The fitted pipeline: split, standardize, fit `g`, fit the loss engine on
//! `D1`, calibrate on `D2`, and fix `tau` from validation losses.

use crate::calibration::{AggregationMode, CalibratedBound, GammaSource};
use crate::config::{derive_seed, hex, AggregationConfig, RunConfig, Stream, TauRule};
use crate::dataset::{make_splits, SplitIndices, Standardizer, TabularData};
use crate::error::{LocusError, Result};
use crate::exec::Exec;
use crate::loss_engine::LossCdfEngine;
use crate::predictors::{realized_losses, tau_from_quantile, LossFunction, Predictor};
use crate::scarcity::ScarcityIndex;
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: LocusError,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub(crate) trait AtStage<T> {
    fn at(self, stage: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

/// The scoring state: everything needed to map a raw feature row to
/// `U_alpha(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub standardizer: Standardizer,
    pub predictor: Predictor,
    pub loss: LossFunction,
    pub bound: CalibratedBound,
    /// Loss tolerance in standardized loss units.
    pub tau: f64,
    pub n1: usize,
}

impl FittedPipeline {
    pub fn standardize_row(&self, x_raw: &[f64]) -> Vec<f64> {
        self.standardizer.transform_row(x_raw)
    }

    /// `U_alpha` for a raw feature row.
    pub fn score_raw(&self, x_raw: &[f64]) -> Result<f64> {
        if x_raw.len() != self.feature_names.len() {
            return Err(LocusError::ColumnMismatch(format!(
                "expected {} features, got {}",
                self.feature_names.len(),
                x_raw.len()
            )));
        }
        self.bound.score(&self.standardize_row(x_raw))
    }

    pub fn gamma_raw(&self, x_raw: &[f64]) -> Option<f64> {
        self.bound.gamma_at(&self.standardize_row(x_raw))
    }

    /// Scores every row of a raw feature matrix.
    pub fn score_raw_batch(&self, x_raw: ArrayView2<'_, f64>, exec: Exec) -> Result<Vec<f64>> {
        if x_raw.ncols() != self.feature_names.len() {
            return Err(LocusError::ColumnMismatch(format!(
                "expected {} features, got {}",
                self.feature_names.len(),
                x_raw.ncols()
            )));
        }
        let z = self.standardizer.transform_features(&x_raw.to_owned());
        self.bound.score_batch(z.view(), exec)
    }

    /// Realized standardized losses of `g` on raw labelled data.
    pub fn losses_raw(&self, data: &TabularData) -> Result<Vec<f64>> {
        let std = self.standardizer.transform(data)?;
        Ok(realized_losses(&self.predictor, self.loss, &std).to_vec())
    }

    /// Converts a standardized loss to raw target units.
    pub fn to_raw_loss(&self, z: f64) -> f64 {
        self.loss.to_raw_scale(z, self.standardizer.target_sd)
    }
}

/// Standardized splits.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: TabularData,
    pub cal_d1: TabularData,
    pub cal_d2: TabularData,
    pub validation: TabularData,
    pub test: TabularData,
    pub indices: SplitIndices,
}

/// Realized standardized losses of `g` on each non-train split.
#[derive(Debug, Clone)]
pub struct SplitLosses {
    pub cal_d1: Vec<f64>,
    pub cal_d2: Vec<f64>,
    pub validation: Vec<f64>,
    pub test: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub fitted: FittedPipeline,
    pub splits: Splits,
    pub losses: SplitLosses,
    pub split_hash: String,
}

/// SHA-256 of the split row indices; equal hashes mean the methods of a seed
/// saw the same test rows.
pub fn split_hash(indices: &SplitIndices) -> String {
    let bytes = serde_json::to_vec(indices).expect("indices serialize");
    hex(&Sha256::digest(&bytes))
}

fn aggregation_mode(cfg: &AggregationConfig, d1: &TabularData) -> Result<AggregationMode> {
    let mode = match cfg {
        AggregationConfig::Mean => AggregationMode::Mean,
        AggregationConfig::Envelope { gamma } => AggregationMode::Envelope {
            gamma: GammaSource::Fixed { gamma: *gamma },
        },
        AggregationConfig::Scarcity { scarcity } => AggregationMode::Envelope {
            gamma: GammaSource::Scarcity {
                index: ScarcityIndex::from_spec(d1.features.view(), scarcity)?,
            },
        },
    };
    mode.validate()?;
    Ok(mode)
}

/// Runs the full fit for one seed on already loaded raw data.
pub fn fit_pipeline(
    cfg: &RunConfig,
    data: &TabularData,
    seed: u64,
    exec: Exec,
) -> std::result::Result<PipelineRun, StageError> {
    cfg.validate().at("config")?;
    let raw = make_splits(
        data,
        cfg.split.fractions,
        cfg.split.cal_d1_fraction,
        derive_seed(seed, Stream::Split),
    )
    .at("split")?;
    let standardizer = Standardizer::fit(&raw.train).at("standardize")?;
    let std = |d: &TabularData| standardizer.transform(d).at("standardize");
    let splits = Splits {
        train: std(&raw.train)?,
        cal_d1: std(&raw.cal_d1)?,
        cal_d2: std(&raw.cal_d2)?,
        validation: std(&raw.validation)?,
        test: std(&raw.test)?,
        indices: raw.indices.clone(),
    };
    let predictor = Predictor::fit(&splits.train, &cfg.predictor).at("predictor")?;
    let loss_of = |d: &TabularData| realized_losses(&predictor, cfg.loss, d).to_vec();
    let losses = SplitLosses {
        cal_d1: loss_of(&splits.cal_d1),
        cal_d2: loss_of(&splits.cal_d2),
        validation: loss_of(&splits.validation),
        test: loss_of(&splits.test),
    };
    let engine = LossCdfEngine::fit(
        splits.cal_d1.features.view(),
        &losses.cal_d1,
        &cfg.engine,
        derive_seed(seed, Stream::Engine),
    )
    .at("engine")?;
    let mode = aggregation_mode(&cfg.aggregation, &splits.cal_d1).at("scarcity")?;
    let bound = CalibratedBound::calibrate(
        engine,
        mode,
        splits.cal_d2.features.view(),
        &losses.cal_d2,
        cfg.alpha,
        exec,
    )
    .at("calibrate")?;
    let tau = match cfg.tau {
        TauRule::Quantile { level } => tau_from_quantile(&losses.validation, level).at("tau")?,
        TauRule::Value { value } => value,
    };
    let split_hash = split_hash(&splits.indices);
    Ok(PipelineRun {
        fitted: FittedPipeline {
            feature_names: data.feature_names.clone(),
            target_name: data.target_name.clone(),
            standardizer,
            predictor,
            loss: cfg.loss,
            bound,
            tau,
            n1: splits.cal_d1.n_rows(),
        },
        splits,
        losses,
        split_hash,
    })
}

/// Loads the configured data for `seed` and fits the pipeline.
pub fn run(cfg: &RunConfig, seed: u64, exec: Exec) -> std::result::Result<(TabularData, PipelineRun), StageError> {
    let data = cfg.data.load(seed).at("data")?;
    let run = fit_pipeline(cfg, &data, seed, exec)?;
    Ok((data, run))
}
