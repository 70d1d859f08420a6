//! Repeated-seed benchmark: every seed runs the whole pipeline and scores
//! the same test split with every method; the summary reports the median and
//! the 5th/95th percentiles of each metric over seeds.

use super::iforest::IsolationForest;
use super::label_variance::LabelVariance;
use super::metrics::{compute_metrics, matched_acceptance_threshold, score_metrics, RunMetrics};
use crate::config::{derive_seed, BenchMethod, RunConfig, Stream};
use crate::error::Result;
use crate::exec::Exec;
use crate::flagging::{
    certify_lambda, default_alpha_grid, default_lambda_grid, tune_alpha, tune_lambda, Threshold,
};
use crate::pipeline::{self, AtStage, PipelineRun, StageError};
use crate::quantile::{sort_reals, sorted_quantile};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// One method's outcome on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: BenchMethod,
    pub lambda: Threshold,
    /// Level of the bound for the Locus methods.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub split_hash: String,
    pub tau: f64,
    pub t: f64,
    pub n_test: usize,
    pub methods: Vec<MethodResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub stage: String,
    pub message: String,
}

/// Median and 5th/95th percentiles over the seeds where the metric is
/// defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
    pub n_defined: usize,
}

impl SummaryCell {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        sort_reals(&mut v);
        Some(Self {
            median: sorted_quantile(&v, 0.5),
            p5: sorted_quantile(&v, 0.05),
            p95: sorted_quantile(&v, 0.95),
            n_defined: v.len(),
        })
    }

    /// `"median (p5; p95)"` in percent with one decimal.
    pub fn render_percent(cell: Option<&Self>) -> String {
        match cell {
            Some(c) => format!("{:.1} ({:.1}; {:.1})", 100.0 * c.median, 100.0 * c.p5, 100.0 * c.p95),
            None => "-- (--; --)".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: BenchMethod,
    pub p_a: Option<SummaryCell>,
    pub p_big_z: Option<SummaryCell>,
    pub p_big_z_given_a: Option<SummaryCell>,
    pub p_conf: Option<SummaryCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub n_seeds: usize,
    pub n_failed: usize,
    pub methods: Vec<MethodSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResults {
    pub config: RunConfig,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedResult>,
    pub failures: Vec<SeedFailure>,
    pub summary: BenchmarkSummary,
    /// Set by callers that stamp their output; ignored by comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

/// Per-test-point scores of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDump {
    pub seed: u64,
    pub z: Vec<f64>,
    pub u_alpha: Vec<f64>,
    pub gamma: Vec<Option<f64>>,
    pub iflag: Option<Vec<f64>>,
    pub label_variance: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    pub results: BenchmarkResults,
    /// Present when requested.
    pub dumps: Option<Vec<ScoreDump>>,
}

struct SeedOutcome {
    result: SeedResult,
    dump: ScoreDump,
}

fn run_seed(cfg: &RunConfig, seed: u64, exec: Exec) -> std::result::Result<SeedOutcome, StageError> {
    let (_, run) = pipeline::run(cfg, seed, exec)?;
    evaluate_seed(cfg, seed, &run, exec)
}

fn evaluate_seed(cfg: &RunConfig, seed: u64, run: &PipelineRun, exec: Exec) -> std::result::Result<SeedOutcome, StageError> {
    let fitted = &run.fitted;
    let bound = &fitted.bound;
    let tau = fitted.tau;
    let val = &run.splits.validation;
    let test = &run.splits.test;
    let z_val = &run.losses.validation;
    let z_test = &run.losses.test;
    let exceed_val: Vec<bool> = z_val.iter().map(|&z| z > tau).collect();
    let fl = &cfg.flagging;
    let bm = &cfg.benchmark;

    let u_val = bound.score_batch(val.features.view(), exec).at("score")?;
    let u_test = bound.score_batch(test.features.view(), exec).at("score")?;
    let gamma_test: Vec<Option<f64>> = (0..test.n_rows()).map(|i| bound.gamma_at(&test.row(i))).collect();

    let lambda_grid = fl
        .lambda_grid
        .clone()
        .unwrap_or_else(|| default_lambda_grid(&u_val, fl.lambda_grid_size));
    let alpha_grid = fl.alpha_grid.clone().unwrap_or_else(default_alpha_grid);

    let mut iflag: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut label_var: Option<(Vec<f64>, Vec<f64>)> = None;
    let train = &run.splits.train;
    let mut methods = Vec::new();
    for &method in &bm.methods {
        let bound_metrics = |lambda: Threshold| compute_metrics(z_test, &u_test, tau, lambda).at("metrics");
        let r = match method {
            BenchMethod::Locus => {
                let lambda = Threshold::Value(tau);
                MethodResult {
                    method,
                    lambda,
                    alpha: Some(bound.alpha()),
                    metrics: bound_metrics(lambda)?,
                }
            }
            BenchMethod::LocusTuned => {
                let (rule, _) = tune_lambda(&u_val, &exceed_val, &lambda_grid, fl.eta, fl.rho_min, bound.alpha())
                    .at("tune")?;
                MethodResult {
                    method,
                    lambda: rule.lambda,
                    alpha: Some(bound.alpha()),
                    metrics: bound_metrics(rule.lambda)?,
                }
            }
            BenchMethod::LocusCertified => {
                let (rule, _) =
                    certify_lambda(&u_val, &exceed_val, &lambda_grid, fl.eta, fl.delta, bound.alpha()).at("certify")?;
                MethodResult {
                    method,
                    lambda: rule.lambda,
                    alpha: Some(bound.alpha()),
                    metrics: bound_metrics(rule.lambda)?,
                }
            }
            BenchMethod::LocusAlpha => {
                let (rule, _) = tune_alpha(
                    bound,
                    tau,
                    &alpha_grid,
                    fl.eta,
                    fl.rho_min,
                    val.features.view(),
                    z_val,
                    exec,
                )
                .at("tune")?;
                let tuned = bound.with_alpha(rule.alpha).at("tune")?;
                let u = tuned.score_batch(test.features.view(), exec).at("score")?;
                MethodResult {
                    method,
                    lambda: rule.lambda,
                    alpha: Some(rule.alpha),
                    metrics: compute_metrics(z_test, &u, tau, rule.lambda).at("metrics")?,
                }
            }
            BenchMethod::LocusMatched => {
                let lambda =
                    Threshold::Value(matched_acceptance_threshold(&u_val, bm.target_acceptance).at("matched")?);
                MethodResult {
                    method,
                    lambda,
                    alpha: Some(bound.alpha()),
                    metrics: bound_metrics(lambda)?,
                }
            }
            BenchMethod::Iflag => {
                let forest = IsolationForest::fit(train.features.view(), &bm.iforest, derive_seed(seed, Stream::Baseline))
                    .at("iflag")?;
                let sv = exec.map(val.n_rows(), |i| forest.score(&val.row(i)));
                let st = exec.map(test.n_rows(), |i| forest.score(&test.row(i)));
                let lambda = Threshold::Value(matched_acceptance_threshold(&sv, bm.target_acceptance).at("matched")?);
                let metrics = score_metrics(z_test, &st, tau, lambda).at("metrics")?;
                iflag = Some((sv, st));
                MethodResult {
                    method,
                    lambda,
                    alpha: None,
                    metrics,
                }
            }
            BenchMethod::LabelVariance => {
                let k = bm.label_variance_k.unwrap_or(50).min(train.n_rows());
                let lv = LabelVariance::fit(train.features.view(), train.target.as_slice().unwrap(), k)
                    .at("label_variance")?;
                let sv = exec.map(val.n_rows(), |i| lv.variance(&val.row(i)));
                let st = exec.map(test.n_rows(), |i| lv.variance(&test.row(i)));
                let lambda = Threshold::Value(matched_acceptance_threshold(&sv, bm.target_acceptance).at("matched")?);
                let metrics = score_metrics(z_test, &st, tau, lambda).at("metrics")?;
                label_var = Some((sv, st));
                MethodResult {
                    method,
                    lambda,
                    alpha: None,
                    metrics,
                }
            }
        };
        methods.push(r);
    }
    Ok(SeedOutcome {
        result: SeedResult {
            seed,
            split_hash: run.split_hash.clone(),
            tau,
            t: bound.t(),
            n_test: test.n_rows(),
            methods,
        },
        dump: ScoreDump {
            seed,
            z: z_test.clone(),
            u_alpha: u_test,
            gamma: gamma_test,
            iflag: iflag.map(|p| p.1),
            label_variance: label_var.map(|p| p.1),
        },
    })
}

fn summarize(methods: &[BenchMethod], per_seed: &[SeedResult], n_failed: usize) -> BenchmarkSummary {
    let methods = methods
        .iter()
        .map(|&m| {
            let rows: Vec<&RunMetrics> = per_seed
                .iter()
                .filter_map(|s| s.methods.iter().find(|r| r.method == m).map(|r| &r.metrics))
                .collect();
            let cell = |f: &dyn Fn(&RunMetrics) -> Option<f64>| {
                SummaryCell::from_values(&rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            MethodSummary {
                method: m,
                p_a: cell(&|r| Some(r.p_a)),
                p_big_z: cell(&|r| Some(r.p_big_z)),
                p_big_z_given_a: cell(&|r| r.p_big_z_given_a),
                p_conf: cell(&|r| r.p_conf),
            }
        })
        .collect();
    BenchmarkSummary {
        n_seeds: per_seed.len(),
        n_failed,
        methods,
    }
}

/// Runs every configured seed (in parallel under `Exec::Parallel`) and
/// summarizes. Failed seeds are listed in `failures` and excluded from the
/// summary.
pub fn run_benchmark(cfg: &RunConfig, exec: Exec, keep_dumps: bool) -> Result<BenchmarkOutput> {
    cfg.validate()?;
    let seeds = cfg.benchmark.seeds.clone();
    let inner = if seeds.len() > 1 { Exec::Sequential } else { exec };
    let outcomes = exec.map(seeds.len(), |i| run_seed(cfg, seeds[i], inner));
    let mut per_seed = Vec::new();
    let mut failures = Vec::new();
    let mut dumps = Vec::new();
    for (seed, outcome) in seeds.iter().zip(outcomes) {
        match outcome {
            Ok(o) => {
                per_seed.push(o.result);
                if keep_dumps {
                    dumps.push(o.dump);
                }
            }
            Err(e) => failures.push(SeedFailure {
                seed: *seed,
                stage: e.stage.to_string(),
                message: e.error.to_string(),
            }),
        }
    }
    let summary = summarize(&cfg.benchmark.methods, &per_seed, failures.len());
    Ok(BenchmarkOutput {
        results: BenchmarkResults {
            config: cfg.clone(),
            config_hash: cfg.hash(),
            seeds,
            per_seed,
            failures,
            summary,
            generated_at: None,
        },
        dumps: keep_dumps.then_some(dumps),
    })
}

impl BenchmarkResults {
    /// Plain-text table, one row per method, cells `median (p5; p95)` in
    /// percent.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let headers = ["method", "accept %", "P(Z>tau) %", "P(Z>tau | A) %", "coverage %"];
        let rows: Vec<[String; 5]> = self
            .summary
            .methods
            .iter()
            .map(|m| {
                [
                    m.method.name().to_string(),
                    SummaryCell::render_percent(m.p_a.as_ref()),
                    SummaryCell::render_percent(m.p_big_z.as_ref()),
                    SummaryCell::render_percent(m.p_big_z_given_a.as_ref()),
                    SummaryCell::render_percent(m.p_conf.as_ref()),
                ]
            })
            .collect();
        let mut widths = headers.map(str::len);
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cells: [&str; 5], out: &mut String| {
            let mut s = format!("{:<w$}", cells[0], w = widths[0]);
            for (c, w) in cells.iter().zip(widths).skip(1) {
                let _ = write!(s, "  {c:>w$}");
            }
            let _ = writeln!(out, "{}", s.trim_end());
        };
        line(headers, &mut out);
        for r in &rows {
            line([&r[0], &r[1], &r[2], &r[3], &r[4]], &mut out);
        }
        let _ = writeln!(
            out,
            "median (5%; 95%) over {} seeds{}",
            self.summary.n_seeds,
            if self.summary.n_failed > 0 {
                format!("; {} seeds failed and were excluded", self.summary.n_failed)
            } else {
                String::new()
            }
        );
        out
    }

    /// Per-method test-split metrics of each seed, keyed by method name.
    pub fn metrics_by_method(&self) -> BTreeMap<&'static str, Vec<RunMetrics>> {
        let mut map: BTreeMap<&'static str, Vec<RunMetrics>> = BTreeMap::new();
        for s in &self.per_seed {
            for r in &s.methods {
                map.entry(r.method.name()).or_default().push(r.metrics);
            }
        }
        map
    }
}

impl ScoreDump {
    /// CSV rows `seed,row,z,u_alpha,gamma,iflag,label_variance`.
    pub fn write_csv<W: std::io::Write>(dumps: &[ScoreDump], w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| crate::error::LocusError::Csv(e.to_string());
        wr.write_record(["seed", "row", "z", "u_alpha", "gamma", "iflag", "label_variance"])
            .map_err(err)?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        for d in dumps {
            for i in 0..d.z.len() {
                wr.write_record([
                    d.seed.to_string(),
                    i.to_string(),
                    d.z[i].to_string(),
                    d.u_alpha[i].to_string(),
                    opt(d.gamma[i]),
                    opt(d.iflag.as_ref().map(|v| v[i])),
                    opt(d.label_variance.as_ref().map(|v| v[i])),
                ])
                .map_err(err)?;
            }
        }
        wr.flush()
            .map_err(|e| crate::error::LocusError::Csv(e.to_string()))
    }
}
