//! Fixtures shared by the integration suites: independent train / D1 / D2 /
//! validation / test draws from a synthetic problem, standardized on train,
//! with a fitted deployed predictor and its realized losses.

#![allow(dead_code)]

use locus_core::calibration::{AggregationMode, CalibratedBound};
use locus_core::dataset::{generate_synthetic, Standardizer, SyntheticOracle, SyntheticSpec, TabularData};
use locus_core::loss_engine::{EngineSpec, LossCdf, LossCdfEngine, OracleEngine};
use locus_core::predictors::{realized_losses, LossFunction, Predictor, PredictorSpec};
use locus_core::Exec;

pub const LOSS: LossFunction = LossFunction::Absolute;

pub struct Sizes {
    pub train: usize,
    pub d1: usize,
    pub d2: usize,
    pub validation: usize,
    pub test: usize,
}

pub struct Part {
    pub raw: TabularData,
    pub std: TabularData,
    pub z: Vec<f64>,
}

pub struct Problem {
    pub oracle: SyntheticOracle,
    pub standardizer: Standardizer,
    pub predictor: Predictor,
    pub train: Part,
    pub d1: Part,
    pub d2: Part,
    pub validation: Part,
    pub test: Part,
}

fn mix(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xBF58_476D_1CE4_E5B9) ^ 0x5DEE_CE66
}

impl Problem {
    /// Draws each part independently from `spec` and fits `g` on train.
    pub fn draw(spec: &SyntheticSpec, sizes: &Sizes, predictor: &PredictorSpec, seed: u64) -> Self {
        let sample = |n: usize, stream: u64| generate_synthetic(&spec.with_n(n).with_seed(mix(seed, stream))).unwrap();
        let train_raw = sample(sizes.train, 1);
        let standardizer = Standardizer::fit(&train_raw).unwrap();
        let train_std = standardizer.transform(&train_raw).unwrap();
        let g = Predictor::fit(&train_std, predictor).unwrap();
        let part = |raw: TabularData| {
            let std = standardizer.transform(&raw).unwrap();
            let z = realized_losses(&g, LOSS, &std).to_vec();
            Part { raw, std, z }
        };
        let train = part(train_raw);
        let d1 = part(sample(sizes.d1, 2));
        let d2 = part(sample(sizes.d2, 3));
        let validation = part(sample(sizes.validation.max(1), 4));
        let test = part(sample(sizes.test.max(1), 5));
        Self {
            oracle: spec.oracle(),
            standardizer,
            predictor: g,
            train,
            d1,
            d2,
            validation,
            test,
        }
    }

    pub fn engine(&self, spec: &EngineSpec, seed: u64) -> LossCdfEngine {
        LossCdfEngine::fit(self.d1.std.features.view(), &self.d1.z, spec, seed).unwrap()
    }

    pub fn oracle_engine(&self) -> OracleEngine {
        OracleEngine {
            oracle: self.oracle.clone(),
            predictor: self.predictor.clone(),
            standardizer: self.standardizer.clone(),
            loss: LOSS,
        }
    }

    pub fn calibrate<E: LossCdf>(&self, engine: E, mode: AggregationMode, alpha: f64) -> CalibratedBound<E> {
        CalibratedBound::calibrate(engine, mode, self.d2.std.features.view(), &self.d2.z, alpha, Exec::default())
            .unwrap()
    }

    pub fn raw_x(&self, x_std: &[f64]) -> Vec<f64> {
        x_std
            .iter()
            .zip(self.standardizer.feature_means.iter().zip(&self.standardizer.feature_sds))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn std_x(&self, x_raw: &[f64]) -> Vec<f64> {
        self.standardizer.transform_row(x_raw)
    }

    /// Raw-unit prediction of `g` at a standardized point.
    pub fn prediction_raw(&self, x_std: &[f64]) -> f64 {
        self.standardizer.inverse_target(self.predictor.predict(x_std))
    }

    /// True `P(Z <= z | x)` for a standardized point and standardized loss.
    pub fn true_cdf(&self, x_std: &[f64], z_std: f64) -> f64 {
        let z = LOSS.to_raw_scale(z_std, self.standardizer.target_sd);
        self.oracle.loss_cdf(&self.raw_x(x_std), self.prediction_raw(x_std), LOSS, z)
    }

    /// True `P(Z > tau | x)` with `tau` in standardized loss units.
    pub fn true_exceedance(&self, x_std: &[f64], tau_std: f64) -> f64 {
        1.0 - self.true_cdf(x_std, tau_std)
    }
}

/// Fraction of `(z, u)` pairs with `z <= u`.
pub fn coverage(z: &[f64], u: &[f64]) -> f64 {
    z.iter().zip(u).filter(|(z, u)| z <= u).count() as f64 / z.len() as f64
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Median with the project convention (higher order statistic).
pub fn median(v: &[f64]) -> f64 {
    locus_core::quantile::quantile(v, 0.5).unwrap()
}

/// `ceil(n^(2/3))`: a neighbour count growing with `n` while `k/n -> 0`.
pub fn consistent_k(n: usize) -> usize {
    ((n as f64).powf(2.0 / 3.0)).ceil() as usize
}
