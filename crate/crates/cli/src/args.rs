use clap::{Args, Parser, Subcommand, ValueEnum};
use locus_core::config::{
    AggregationConfig, DataSource, FlagMethod, RunConfig, SyntheticPreset, TauRule,
};
use locus_core::loss_engine::EngineSpec;
use locus_core::predictors::{LossFunction, PredictorSpec};
use locus_core::scarcity::ScarcitySpec;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "locus", version)]
#[command(about = "Calibrated loss-quantile scores and loss-controlled flagging for a fixed predictor")]
#[command(after_help = "Exit status: 0 success, 1 invalid input or configuration, 2 runtime failure, \
3 the selected rule is EMPTY (accepts nothing).")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run every loop sequentially.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit the pipeline and write an artifact.
    Calibrate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Artifact path.
        #[arg(short, long, default_value = "locus_artifact.json")]
        out: PathBuf,
    },
    /// Score a feature CSV with an artifact.
    Score {
        #[arg(short, long)]
        artifact: PathBuf,
        /// CSV with exactly the artifact's feature columns.
        #[arg(short, long)]
        input: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Attach a flag rule to an artifact.
    Flag(FlagArgs),
    /// Tune the acceptance threshold (or, with --method tuned-alpha, the
    /// level) on labelled validation data.
    Tune(FlagArgs),
    /// Select the certified threshold on labelled validation data.
    Certify(FlagArgs),
    /// Run the seeded benchmark.
    Benchmark {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Results JSON.
        #[arg(short, long, default_value = "benchmark_results.json")]
        out: PathBuf,
        /// Also write the summary table here.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Per-point score dump CSV.
        #[arg(long)]
        dump_scores: Option<PathBuf>,
    },
    /// Write a synthetic dataset to CSV.
    Synth {
        #[arg(long, value_enum, default_value_t = PresetArg::SmoothGaussian)]
        preset: PresetArg,
        #[arg(short, long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Print a summary of an artifact.
    Inspect {
        #[arg(short, long)]
        artifact: PathBuf,
        /// Print the full JSON instead of the summary.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Debug)]
pub struct FlagArgs {
    #[arg(short, long)]
    pub artifact: PathBuf,
    /// Labelled validation CSV (features plus the artifact's target column).
    #[arg(short, long)]
    pub validation: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub rho_min: Option<f64>,
    /// Number of lambda grid points spanning the validation scores.
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Updated artifact path; defaults to overwriting the input.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Tuning report JSON; defaults to `<artifact>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodArg {
    DefaultTau,
    TunedLambda,
    TunedAlpha,
    Certified,
}

impl From<MethodArg> for FlagMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::DefaultTau => FlagMethod::DefaultTau,
            MethodArg::TunedLambda => FlagMethod::TunedLambda,
            MethodArg::TunedAlpha => FlagMethod::TunedAlpha,
            MethodArg::Certified => FlagMethod::Certified,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum PresetArg {
    SmoothGaussian,
    CurvedHeteroskedastic,
}

impl From<PresetArg> for SyntheticPreset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::SmoothGaussian => SyntheticPreset::SmoothGaussian,
            PresetArg::CurvedHeteroskedastic => SyntheticPreset::CurvedHeteroskedastic,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineArg {
    Ensemble,
    KnnEmpirical,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggregationArg {
    Mean,
    Envelope,
    Scarcity,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossArg {
    Absolute,
    Squared,
}

/// JSON config file plus overrides; flags win.
#[derive(Args, Debug, Default)]
pub struct ConfigArgs {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Data CSV (requires --target).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    /// Synthetic preset (replaces the configured data source).
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    /// Rows of the synthetic preset.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    /// kNN regressor with this many neighbours instead of OLS.
    #[arg(long)]
    pub knn_predictor: Option<usize>,
    #[arg(long, value_enum)]
    pub engine: Option<EngineArg>,
    /// Neighbours of the knn-empirical engine.
    #[arg(long)]
    pub engine_k: Option<usize>,
    /// Ensemble size of the bootstrap engine.
    #[arg(long)]
    pub members: Option<usize>,
    #[arg(long, value_enum)]
    pub aggregation: Option<AggregationArg>,
    /// Constant gamma for --aggregation envelope.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// tau as this quantile of validation losses.
    #[arg(long, conflicts_with = "tau")]
    pub tau_level: Option<f64>,
    /// Fixed tau in standardized loss units.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub rho_min: Option<f64>,
}

impl ConfigArgs {
    /// Applies the overrides on top of `cfg` (unvalidated).
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), String> {
        match (&self.data, &self.target) {
            (Some(path), Some(target)) => {
                cfg.data = DataSource::Csv {
                    path: path.clone(),
                    target: target.clone(),
                }
            }
            (Some(_), None) => return Err("--data needs --target".into()),
            (None, Some(target)) => match &mut cfg.data {
                DataSource::Csv { target: t, .. } => *t = target.clone(),
                _ => return Err("--target needs a CSV data source".into()),
            },
            (None, None) => {}
        }
        if self.preset.is_some() || self.n.is_some() {
            let (preset, n) = match &cfg.data {
                DataSource::Synthetic { preset, n } => (*preset, *n),
                _ => (SyntheticPreset::default(), 2000),
            };
            cfg.data = DataSource::Synthetic {
                preset: self.preset.map_or(preset, Into::into),
                n: self.n.unwrap_or(n),
            };
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(l) = self.loss {
            cfg.loss = match l {
                LossArg::Absolute => LossFunction::Absolute,
                LossArg::Squared => LossFunction::Squared,
            };
        }
        if let Some(k) = self.knn_predictor {
            cfg.predictor = PredictorSpec::KnnRegressor { k };
        }
        if let Some(e) = self.engine {
            cfg.engine = match e {
                EngineArg::Ensemble => EngineSpec::default(),
                EngineArg::KnnEmpirical => EngineSpec::KnnEmpirical { k: 100 },
            };
        }
        if let Some(k) = self.engine_k {
            match &mut cfg.engine {
                EngineSpec::KnnEmpirical { k: kk } => *kk = k,
                EngineSpec::BootstrapGaussianEnsemble { k_local, .. } => *k_local = Some(k),
            }
        }
        if let Some(m) = self.members {
            match &mut cfg.engine {
                EngineSpec::BootstrapGaussianEnsemble { members, .. } => *members = m,
                _ => return Err("--members applies to the ensemble engine".into()),
            }
        }
        if let Some(a) = self.aggregation {
            cfg.aggregation = match a {
                AggregationArg::Mean => AggregationConfig::Mean,
                AggregationArg::Envelope => AggregationConfig::Envelope {
                    gamma: self.gamma.ok_or("--aggregation envelope needs --gamma")?,
                },
                AggregationArg::Scarcity => AggregationConfig::Scarcity {
                    scarcity: ScarcitySpec::default(),
                },
            };
        } else if let Some(g) = self.gamma {
            cfg.aggregation = AggregationConfig::Envelope { gamma: g };
        }
        if let Some(level) = self.tau_level {
            cfg.tau = TauRule::Quantile { level };
        }
        if let Some(value) = self.tau {
            cfg.tau = TauRule::Value { value };
        }
        if let Some(e) = self.eta {
            cfg.flagging.eta = e;
        }
        if let Some(d) = self.delta {
            cfg.flagging.delta = d;
        }
        if let Some(r) = self.rho_min {
            cfg.flagging.rho_min = r;
        }
        Ok(())
    }
}
