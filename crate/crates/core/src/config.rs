//! Run configuration shared by the CLI and the benchmark harness.
//!
//! Every field has a default, so `{}` is a complete configuration: the
//! smooth synthetic preset with 2000 rows, a 40/40/10/10 split, OLS, absolute
//! loss, the bootstrap ensemble engine, mean aggregation, `alpha = 0.1` and
//! `tau` at the 0.7-quantile of validation losses. Unknown fields are
//! rejected.
//!
//! All loss-valued settings (`tau` values, `lambda` grids) are in
//! standardized loss units: losses of the predictor on the target rescaled
//! by the training mean and standard deviation.

use crate::dataset::{generate_synthetic, load_csv, SplitFractions, SyntheticSpec, TabularData};
use crate::error::{LocusError, Result};
use crate::evaluation::iforest::IsolationForestSpec;
use crate::loss_engine::EngineSpec;
use crate::predictors::{LossFunction, PredictorSpec};
use crate::scarcity::ScarcitySpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticPreset {
    /// One feature, sine mean, noise scale growing with `|x|`.
    #[default]
    SmoothGaussian,
    /// Two features, quadratic mean, a bump of extra noise; OLS is misfit.
    CurvedHeteroskedastic,
}

impl SyntheticPreset {
    pub fn spec(self, n: usize, seed: u64) -> SyntheticSpec {
        match self {
            SyntheticPreset::SmoothGaussian => SyntheticSpec::smooth_gaussian(n, seed),
            SyntheticPreset::CurvedHeteroskedastic => SyntheticSpec::curved_heteroskedastic(n, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        #[serde(default)]
        preset: SyntheticPreset,
        #[serde(default = "default_n")]
        n: usize,
    },
    /// A fully specified generator; its `seed` is a base mixed with the run
    /// seed.
    SyntheticCustom { spec: SyntheticSpec },
    Csv { path: PathBuf, target: String },
}

fn default_n() -> usize {
    2000
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            preset: SyntheticPreset::default(),
            n: default_n(),
        }
    }
}

impl DataSource {
    /// The generator behind a synthetic source for a given run seed.
    pub fn synthetic_spec(&self, run_seed: u64) -> Option<SyntheticSpec> {
        match self {
            DataSource::Synthetic { preset, n } => Some(preset.spec(*n, derive_seed(run_seed, Stream::Data))),
            DataSource::SyntheticCustom { spec } => {
                Some(spec.with_seed(derive_seed(run_seed ^ spec.seed, Stream::Data)))
            }
            DataSource::Csv { .. } => None,
        }
    }

    /// Loads or generates the data; synthetic sources draw a fresh sample
    /// per run seed.
    pub fn load(&self, run_seed: u64) -> Result<TabularData> {
        match self {
            DataSource::Csv { path, target } => load_csv(path, target),
            _ => generate_synthetic(&self.synthetic_spec(run_seed).expect("synthetic source")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub fractions: SplitFractions,
    /// Share of the calibration block used to fit the engine (`D1`).
    pub cal_d1_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            fractions: SplitFractions::default(),
            cal_d1_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AggregationConfig {
    /// `F~` is the average of the draw CDFs.
    #[default]
    Mean,
    /// Lower `gamma`-quantile of the draw CDFs with a constant `gamma`.
    Envelope { gamma: f64 },
    /// Envelope with `gamma(x)` driven by the kNN scarcity score on `D1`.
    Scarcity {
        #[serde(default)]
        scarcity: ScarcitySpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TauRule {
    /// Empirical quantile of the validation losses.
    Quantile { level: f64 },
    /// Fixed value in standardized loss units.
    Value { value: f64 },
}

impl Default for TauRule {
    fn default() -> Self {
        TauRule::Quantile { level: 0.7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, Hash)]
#[serde(rename_all = "snake_case")]
pub enum FlagMethod {
    #[default]
    DefaultTau,
    TunedLambda,
    TunedAlpha,
    Certified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlaggingConfig {
    pub method: FlagMethod,
    /// Target conditional exceedance.
    pub eta: f64,
    /// Certificate failure probability.
    pub delta: f64,
    /// Minimum validation acceptance for the tuners.
    pub rho_min: f64,
    pub lambda_grid_size: usize,
    /// Explicit lambda grid; overrides `lambda_grid_size`.
    pub lambda_grid: Option<Vec<f64>>,
    /// Explicit alpha grid; defaults to `{0.02, ..., 0.30}`.
    pub alpha_grid: Option<Vec<f64>>,
}

impl Default for FlaggingConfig {
    fn default() -> Self {
        Self {
            method: FlagMethod::DefaultTau,
            eta: 0.1,
            delta: 0.1,
            rho_min: 0.05,
            lambda_grid_size: 50,
            lambda_grid: None,
            alpha_grid: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    /// `lambda = tau`.
    Locus,
    LocusTuned,
    LocusAlpha,
    LocusCertified,
    /// `U_alpha` thresholded at matched acceptance.
    LocusMatched,
    Iflag,
    LabelVariance,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 7] = [
        BenchMethod::Locus,
        BenchMethod::LocusTuned,
        BenchMethod::LocusAlpha,
        BenchMethod::LocusCertified,
        BenchMethod::LocusMatched,
        BenchMethod::Iflag,
        BenchMethod::LabelVariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Locus => "locus",
            BenchMethod::LocusTuned => "locus_tuned",
            BenchMethod::LocusAlpha => "locus_alpha",
            BenchMethod::LocusCertified => "locus_certified",
            BenchMethod::LocusMatched => "locus_matched",
            BenchMethod::Iflag => "iflag",
            BenchMethod::LabelVariance => "label_variance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSettings {
    pub seeds: Vec<u64>,
    pub methods: Vec<BenchMethod>,
    /// Validation acceptance rate for the matched-acceptance methods.
    pub target_acceptance: f64,
    pub iforest: IsolationForestSpec,
    /// Neighbours of the label-variance baseline; defaults to
    /// `min(50, n_train)`.
    pub label_variance_k: Option<usize>,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        Self {
            seeds: (1..=30).collect(),
            methods: BenchMethod::ALL.to_vec(),
            target_acceptance: 0.7,
            iforest: IsolationForestSpec::default(),
            label_variance_k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    pub split: SplitConfig,
    pub predictor: PredictorSpec,
    pub loss: LossFunction,
    pub engine: EngineSpec,
    pub aggregation: AggregationConfig,
    pub alpha: f64,
    pub tau: TauRule,
    pub flagging: FlaggingConfig,
    /// Seed of a single run (split, engine, synthetic draw).
    pub seed: u64,
    pub benchmark: BenchmarkSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            split: SplitConfig::default(),
            predictor: PredictorSpec::default(),
            loss: LossFunction::default(),
            engine: EngineSpec::default(),
            aggregation: AggregationConfig::default(),
            alpha: 0.1,
            tau: TauRule::default(),
            flagging: FlaggingConfig::default(),
            seed: 0,
            benchmark: BenchmarkSettings::default(),
        }
    }
}

fn check(cond: bool, field: &str, msg: impl std::fmt::Display) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(LocusError::InvalidParameter(format!("{field}: {msg}")))
    }
}

fn unit_open(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

impl RunConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| LocusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// Checks every field against its documented range.
    pub fn validate(&self) -> Result<()> {
        match &self.data {
            DataSource::Synthetic { n, .. } => check(*n >= 10, "data.n", format!("{n} rows is too few"))?,
            DataSource::SyntheticCustom { spec } => spec.validate()?,
            DataSource::Csv { target, .. } => check(!target.is_empty(), "data.target", "empty column name")?,
        }
        self.split.fractions.validate()?;
        check(
            unit_open(self.split.cal_d1_fraction),
            "split.cal_d1_fraction",
            format!("{} outside (0, 1)", self.split.cal_d1_fraction),
        )?;
        match self.predictor {
            PredictorSpec::LinearOls => {}
            PredictorSpec::KnnRegressor { k } => check(k >= 1, "predictor.k", "must be at least 1")?,
        }
        match self.engine {
            EngineSpec::BootstrapGaussianEnsemble { members, k_local } => {
                check(members >= 1, "engine.members", "must be at least 1")?;
                check(k_local != Some(0), "engine.k_local", "must be at least 1")?;
            }
            EngineSpec::KnnEmpirical { k } => check(k >= 2, "engine.k", "must be at least 2")?,
        }
        match self.aggregation {
            AggregationConfig::Mean => {}
            AggregationConfig::Envelope { gamma } => check(
                gamma > 0.0 && gamma <= 1.0,
                "aggregation.gamma",
                format!("{gamma} outside (0, 1]"),
            )?,
            AggregationConfig::Scarcity { scarcity } => {
                check(scarcity.k >= 1, "aggregation.scarcity.k", "must be at least 1")?;
                scarcity.constants.validate()?;
            }
        }
        check(unit_open(self.alpha), "alpha", format!("{} outside (0, 1)", self.alpha))?;
        match self.tau {
            TauRule::Quantile { level } => check(unit_open(level), "tau.level", format!("{level} outside (0, 1)"))?,
            TauRule::Value { value } => check(
                value.is_finite() && value >= 0.0,
                "tau.value",
                format!("{value} must be a finite nonnegative loss"),
            )?,
        }
        let f = &self.flagging;
        check(f.eta >= 0.0 && f.eta < 1.0, "flagging.eta", format!("{} outside [0, 1)", f.eta))?;
        check(unit_open(f.delta), "flagging.delta", format!("{} outside (0, 1)", f.delta))?;
        check(
            f.rho_min >= 0.0 && f.rho_min < 1.0,
            "flagging.rho_min",
            format!("{} outside [0, 1)", f.rho_min),
        )?;
        check(f.lambda_grid_size >= 1, "flagging.lambda_grid_size", "must be at least 1")?;
        if let Some(g) = &f.lambda_grid {
            check(
                !g.is_empty() && g.iter().all(|v| v.is_finite()),
                "flagging.lambda_grid",
                "must be a nonempty list of finite values",
            )?;
        }
        if let Some(g) = &f.alpha_grid {
            check(
                !g.is_empty() && g.iter().all(|a| unit_open(*a)),
                "flagging.alpha_grid",
                "must be a nonempty list of values in (0, 1)",
            )?;
        }
        let b = &self.benchmark;
        check(!b.seeds.is_empty(), "benchmark.seeds", "must not be empty")?;
        check(!b.methods.is_empty(), "benchmark.methods", "must not be empty")?;
        check(
            unit_open(b.target_acceptance),
            "benchmark.target_acceptance",
            format!("{} outside (0, 1)", b.target_acceptance),
        )?;
        check(
            b.iforest.n_trees >= 1 && b.iforest.subsample >= 1,
            "benchmark.iforest",
            "n_trees and subsample must be at least 1",
        )?;
        check(b.label_variance_k != Some(0), "benchmark.label_variance_k", "must be at least 1")?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&bytes))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Independent random streams derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Split = 2,
    Engine = 3,
    Baseline = 4,
}

/// SplitMix64 finalizer over `(seed, stream)`.
pub fn derive_seed(seed: u64, stream: Stream) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((stream as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
