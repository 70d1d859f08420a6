//! Acceptance criteria. Runs as a plain binary: one `PASS`/`FAIL` line per
//! criterion, nonzero exit if any fails.

mod common;

use common::{consistent_k, coverage, mean, median, Problem, Sizes};
use locus_core::artifact::{Artifact, Provenance};
use locus_core::calibration::{AggregationMode, CalibratedBound, GammaSource};
use locus_core::config::{AggregationConfig, BenchMethod, DataSource, RunConfig, SyntheticPreset};
use locus_core::dataset::{generate_synthetic, SyntheticSpec};
use locus_core::evaluation::{compute_metrics, run_benchmark};
use locus_core::flagging::{certificate_epsilons, certify_lambda, default_lambda_grid, Threshold};
use locus_core::loss_engine::{EngineSpec, ExponentialCdf, LocalCdf, LossCdf};
use locus_core::pipeline;
use locus_core::predictors::{tau_from_quantile, PredictorSpec};
use locus_core::scarcity::{GammaConstants, ScarcityIndex, ScarcitySpec};
use locus_core::Exec;
use std::process::ExitCode;
use std::time::Instant;

const ALPHA: f64 = 0.1;

struct Verdict {
    id: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: &'static str, name: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { id, name, pass, detail }
}

fn smooth() -> SyntheticSpec {
    SyntheticSpec::smooth_gaussian(1, 0)
}

fn ols() -> PredictorSpec {
    PredictorSpec::LinearOls
}

fn tau_of(p: &Problem, level: f64) -> f64 {
    tau_from_quantile(&p.validation.z, level).unwrap()
}

/// C1-C3 share one family of 30 independent problems.
fn marginal() -> Vec<Verdict> {
    let sizes = Sizes {
        train: 2000,
        d1: 2000,
        d2: 2000,
        validation: 2000,
        test: 2000,
    };
    let (mut cov_knn, mut cov_const, mut joint) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..30 {
        let p = Problem::draw(&smooth(), &sizes, &ols(), seed);
        let x_test = p.test.std.features.view();

        let knn = p.engine(&EngineSpec::KnnEmpirical { k: 100 }, seed);
        let bound = p.calibrate(knn, AggregationMode::Mean, ALPHA);
        let u = bound.score_batch(x_test, Exec::default()).unwrap();
        cov_knn.push(coverage(&p.test.z, &u));

        let tau = tau_of(&p, 0.7);
        let m = compute_metrics(&p.test.z, &u, tau, Threshold::Value(tau)).unwrap();
        joint.push(m.joint_tail());

        let scale = mean(&p.d1.z);
        let constant = p.calibrate(ExponentialCdf { scale }, AggregationMode::Mean, ALPHA);
        let u = constant.score_batch(x_test, Exec::default()).unwrap();
        cov_const.push(coverage(&p.test.z, &u));
    }
    let c1 = mean(&cov_knn);
    let c2 = mean(&cov_const);
    let c3 = mean(&joint);
    vec![
        verdict(
            "C1",
            "marginal coverage, knn_empirical k=100, n2=2000, 30 seeds",
            (0.896..=0.9085).contains(&c1),
            format!("mean coverage {c1:.4}, required [0.896, 0.9085]"),
        ),
        verdict(
            "C2",
            "marginal coverage, covariate-blind exponential engine",
            c2 >= 0.896,
            format!("mean coverage {c2:.4}, required >= 0.896"),
        ),
        verdict(
            "C3",
            "joint tail P(Z > tau, U <= tau), tau = validation 0.7-quantile",
            c3 <= 0.104,
            format!("mean joint rate {c3:.4}, required <= 0.104"),
        ),
    ]
}

struct ConsistencyRow {
    n: usize,
    cond_exceed: Vec<f64>,
    cond_cov_err: Vec<f64>,
    disagreement: Vec<f64>,
    kept: Vec<usize>,
}

/// C4-C6: a consistent knn engine (`k = ceil(n1^(2/3))`) at growing
/// calibration sizes, compared against the closed-form oracle.
fn consistency() -> Vec<Verdict> {
    let fixed_x: Vec<f64> = (0..20).map(|i| -1.9 + 3.8 * i as f64 / 19.0).collect();
    let probes = generate_synthetic(&smooth().with_n(500).with_seed(9_000)).unwrap();
    let seeds = 10u64;
    let mut rows = Vec::new();
    for n in [1000usize, 4000, 8000] {
        let half = n / 2;
        let mut row = ConsistencyRow {
            n,
            cond_exceed: Vec::new(),
            cond_cov_err: Vec::new(),
            disagreement: Vec::new(),
            kept: Vec::new(),
        };
        // Thirty seeds at the largest n for the conditional exceedance; the
        // coverage and disagreement medians use the first ten.
        let n_seeds = if n == 8000 { 30 } else { seeds };
        for seed in 0..n_seeds {
            let sizes = Sizes {
                train: 2000,
                d1: half,
                d2: half,
                validation: 2000,
                test: 4000,
            };
            let p = Problem::draw(&smooth(), &sizes, &ols(), 100 + seed);
            let engine = p.engine(&EngineSpec::KnnEmpirical { k: consistent_k(half) }, seed);
            let bound = p.calibrate(engine, AggregationMode::Mean, ALPHA);
            let tau = tau_of(&p, 0.7);

            if n == 8000 {
                let u = bound.score_batch(p.test.std.features.view(), Exec::default()).unwrap();
                let m = compute_metrics(&p.test.z, &u, tau, Threshold::Value(tau)).unwrap();
                row.cond_exceed.push(m.p_big_z_given_a.unwrap_or(0.0));
            }
            if seed >= seeds {
                continue;
            }

            let errs: Vec<f64> = fixed_x
                .iter()
                .map(|&x| {
                    let xs = p.std_x(&[x]);
                    let u = bound.score(&xs).unwrap();
                    (p.true_cdf(&xs, u) - (1.0 - ALPHA)).abs()
                })
                .collect();
            row.cond_cov_err.push(mean(&errs));

            let (mut kept, mut disagree) = (0usize, 0usize);
            for i in 0..probes.n_rows() {
                let xs = p.std_x(&probes.row(i));
                let exceed = p.true_exceedance(&xs, tau);
                if (exceed - ALPHA).abs() <= 0.02 {
                    continue;
                }
                kept += 1;
                let oracle_accepts = exceed <= ALPHA;
                let locus_accepts = bound.score(&xs).unwrap() <= tau;
                disagree += usize::from(oracle_accepts != locus_accepts);
            }
            row.kept.push(kept);
            row.disagreement.push(disagree as f64 / kept.max(1) as f64);
        }
        rows.push(row);
    }

    let c4 = mean(&rows[2].cond_exceed);
    let cov: Vec<f64> = rows.iter().map(|r| median(&r.cond_cov_err)).collect();
    let dis: Vec<f64> = rows.iter().map(|r| median(&r.disagreement)).collect();
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let fmt = |v: &[f64]| {
        rows.iter()
            .zip(v)
            .map(|(r, x)| format!("n={}: {x:.4}", r.n))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let min_kept = rows.iter().flat_map(|r| r.kept.iter()).min().copied().unwrap_or(0);
    vec![
        verdict(
            "C4",
            "conditional exceedance P(Z > tau | U <= tau), consistent knn, n=8000",
            c4 <= 0.13,
            format!("mean over {} seeds {c4:.4}, required <= 0.13", rows[2].cond_exceed.len()),
        ),
        verdict(
            "C5",
            "conditional coverage error at 20 fixed x shrinks with n",
            decreasing(&cov),
            format!("median mean |cov(x) - 0.9|: {}", fmt(&cov)),
        ),
        verdict(
            "C6",
            "disagreement with the oracle flag shrinks with n",
            decreasing(&dis) && min_kept > 0,
            format!("median disagreement: {} (>= {min_kept} probes outside the 0.02 margin)", fmt(&dis)),
        ),
    ]
}

/// C7: the certified threshold's true conditional exceedance exceeds eta in
/// at most a delta-sized fraction of trials.
fn certified() -> Vec<Verdict> {
    let (eta, delta, n_val) = (0.25, 0.1, 5000);
    let sizes = Sizes {
        train: 2000,
        d1: 2000,
        d2: 2000,
        validation: 2000,
        test: 1,
    };
    let (mut trials, mut violations, mut nonempty) = (0usize, 0usize, 0usize);
    for b in 0..10u64 {
        let p = Problem::draw(&smooth(), &sizes, &ols(), 500 + b);
        let engine = p.engine(&EngineSpec::KnnEmpirical { k: 100 }, b);
        let bound = p.calibrate(engine, AggregationMode::Mean, ALPHA);
        // At eta = 0.25 and N = 5000 the deviation terms leave no feasible
        // threshold for tau below roughly the 0.85-quantile.
        let tau = tau_of(&p, 0.85);

        let large = generate_synthetic(&smooth().with_n(20_000).with_seed(7_000 + b)).unwrap();
        let large_std = p.standardizer.transform(&large).unwrap();
        let u_large = bound.score_batch(large_std.features.view(), Exec::default()).unwrap();
        let exc_large: Vec<f64> = (0..large_std.n_rows())
            .map(|i| p.true_exceedance(&large_std.row(i), tau))
            .collect();

        for trial in 0..20u64 {
            let val = generate_synthetic(&smooth().with_n(n_val).with_seed(8_000 + 100 * b + trial)).unwrap();
            let val_std = p.standardizer.transform(&val).unwrap();
            let z = locus_core::predictors::realized_losses(&p.predictor, common::LOSS, &val_std);
            let u = bound.score_batch(val_std.features.view(), Exec::default()).unwrap();
            let exceed: Vec<bool> = z.iter().map(|&z| z > tau).collect();
            let grid = default_lambda_grid(&u, 50);
            let (rule, _) = certify_lambda(&u, &exceed, &grid, eta, delta, ALPHA).unwrap();
            trials += 1;
            let Threshold::Value(lambda) = rule.lambda else {
                continue;
            };
            nonempty += 1;
            let (mut acc, mut sum) = (0usize, 0.0);
            for (u, e) in u_large.iter().zip(&exc_large) {
                if *u <= lambda {
                    acc += 1;
                    sum += e;
                }
            }
            if acc > 0 && sum / acc as f64 > eta {
                violations += 1;
            }
        }
    }
    let frac = violations as f64 / trials as f64;

    let reference = [
        (100usize, 0.5966037147843657, 0.13581015157406195),
        (2000, 0.15916674944842502, 0.030368073095415258),
        (100_000, 0.026390922400064916, 0.004294694083467375),
    ];
    let mut worst = 0.0f64;
    for (n, h, g) in reference {
        let (eh, eg) = certificate_epsilons(n, 0.1);
        worst = worst.max((eh - h).abs()).max((eg - g).abs());
    }
    vec![
        verdict(
            "C7",
            "certified threshold violates eta=0.25 in at most 15% of trials (N=5000, delta=0.1, tau = 0.85-quantile)",
            frac <= 0.15 && nonempty > 0,
            format!("{violations}/{trials} violations ({frac:.3}); {nonempty} non-EMPTY selections"),
        ),
        verdict(
            "C7b",
            "certificate epsilons match reference values",
            worst <= 1e-4,
            format!("max abs error {worst:.2e}, required <= 1e-4"),
        ),
    ]
}

/// C8: where `gamma(x)` is at most the pointwise equivalence level the
/// envelope bound dominates the mean bound at the same level; plus the
/// gamma map at three scores.
fn envelope() -> Vec<Verdict> {
    let sizes = Sizes {
        train: 2000,
        d1: 1000,
        d2: 1000,
        validation: 1,
        test: 1,
    };
    let p = Problem::draw(&smooth(), &sizes, &ols(), 42);
    let engine = p.engine(
        &EngineSpec::BootstrapGaussianEnsemble {
            members: 30,
            k_local: None,
        },
        42,
    );
    let index = ScarcityIndex::from_spec(p.d1.std.features.view(), &ScarcitySpec::default()).unwrap();
    let mean_bound = p.calibrate(engine.clone(), AggregationMode::Mean, ALPHA);
    let env_bound = p.calibrate(
        engine,
        AggregationMode::Envelope {
            gamma: GammaSource::Scarcity { index },
        },
        ALPHA,
    );
    let t = mean_bound.t();
    let s = mean_bound.engine().n_draws() as f64;
    let z_grid: Vec<f64> = (0..=4000).map(|i| 8.0 * i as f64 / 4000.0).collect();
    let (mut qualifying, mut violations, mut worst) = (0usize, 0usize, 0.0f64);
    for i in 0..200 {
        let x = [-3.0 + 6.0 * i as f64 / 199.0];
        let gamma = env_bound.gamma_at(&x).unwrap();
        let local = mean_bound.engine().local(&x);
        let mut draws = Vec::new();
        let gamma_eq = z_grid
            .iter()
            .map(|&z| {
                local.fill_draws(z, &mut draws);
                let fbar = draws.iter().sum::<f64>() / s;
                draws.iter().filter(|&&d| d <= fbar).count() as f64 / s
            })
            .fold(1.0, f64::min);
        if gamma > gamma_eq {
            continue;
        }
        qualifying += 1;
        let u_mean = mean_bound.score_at_level(&x, t).unwrap();
        let u_env = env_bound.score_at_level(&x, t).unwrap();
        if u_env < u_mean - 1e-6 {
            violations += 1;
            worst = worst.max(u_mean - u_env);
        }
    }

    let c = GammaConstants::default();
    let expected = [(-50.0, 0.9), (0.0, 0.525), (50.0, 0.15)];
    let map_err = expected
        .iter()
        .map(|&(s, g)| (c.gamma_from_score(s) - g).abs())
        .fold(0.0, f64::max);
    vec![
        verdict(
            "C8",
            "envelope bound >= mean bound where gamma(x) <= gamma_eq(x); gamma map",
            violations == 0 && qualifying >= 10 && map_err <= 1e-6,
            format!(
                "{qualifying}/200 probes qualify, {violations} violations (worst {worst:.2e}); gamma map max error {map_err:.1e}"
            ),
        ),
    ]
}

/// C9: at matched acceptance the calibrated score keeps fewer large losses
/// than either baseline.
fn ranking() -> Vec<Verdict> {
    let mut cfg = RunConfig {
        data: DataSource::Synthetic {
            preset: SyntheticPreset::CurvedHeteroskedastic,
            n: 4000,
        },
        engine: EngineSpec::default(),
        aggregation: AggregationConfig::Mean,
        ..Default::default()
    };
    cfg.benchmark.seeds = (1..=30).collect();
    cfg.benchmark.methods = vec![BenchMethod::LocusMatched, BenchMethod::Iflag, BenchMethod::LabelVariance];
    let out = run_benchmark(&cfg, Exec::default(), false).unwrap();
    let rate = |s: &locus_core::evaluation::benchmark::SeedResult, m: BenchMethod| {
        s.methods
            .iter()
            .find(|r| r.method == m)
            .and_then(|r| r.metrics.p_big_z_given_a)
            .unwrap_or(1.0)
    };
    let seeds = &out.results.per_seed;
    let wins = |baseline: BenchMethod| {
        seeds
            .iter()
            .filter(|s| rate(s, BenchMethod::LocusMatched) < rate(s, baseline))
            .count()
    };
    let (w_if, w_lv) = (wins(BenchMethod::Iflag), wins(BenchMethod::LabelVariance));
    let n = seeds.len();
    let ok = n == 30 && w_if * 5 >= n * 4 && w_lv * 5 >= n * 4;
    vec![verdict(
        "C9",
        "lower P(Z > tau | A) than both baselines at matched acceptance in >= 80% of seeds",
        ok,
        format!(
            "wins vs iflag {w_if}/{n}, vs label variance {w_lv}/{n} ({} seeds failed)",
            out.results.failures.len()
        ),
    )]
}

/// C10: exact finite-sample coverage with nine calibration points.
fn small_n2() -> Vec<Verdict> {
    let sizes = Sizes {
        train: 2000,
        d1: 2000,
        d2: 1,
        validation: 1,
        test: 1,
    };
    let p = Problem::draw(&smooth(), &sizes, &ols(), 7);
    let engine = ExponentialCdf { scale: mean(&p.d1.z) };
    let reps = 100_000u64;
    let mut covered = 0u64;
    for r in 0..reps {
        let draw = generate_synthetic(&smooth().with_n(10).with_seed(1_000_000 + r)).unwrap();
        let std = p.standardizer.transform(&draw).unwrap();
        let z = locus_core::predictors::realized_losses(&p.predictor, common::LOSS, &std);
        let cal_x = std.features.slice(ndarray::s![..9, ..]);
        let bound =
            CalibratedBound::calibrate(engine, AggregationMode::Mean, cal_x, &z.as_slice().unwrap()[..9], ALPHA, Exec::Sequential)
                .unwrap();
        let u = bound.score(&std.row(9)).unwrap();
        covered += u64::from(z[9] <= u);
    }
    let cov = covered as f64 / reps as f64;
    vec![verdict(
        "C10",
        "coverage with n2=9 over 1e5 replicates",
        (cov - 0.9).abs() <= 0.005,
        format!("coverage {cov:.4}, required within 0.005 of 0.9"),
    )]
}

/// C11: artifact round trip and benchmark reruns are bit-identical.
fn determinism() -> Vec<Verdict> {
    let cfg = RunConfig {
        data: DataSource::Synthetic {
            preset: SyntheticPreset::SmoothGaussian,
            n: 1000,
        },
        ..Default::default()
    };
    let (data, run) = pipeline::run(&cfg, 3, Exec::default()).unwrap();
    let probes = data.select(&run.splits.indices.test);
    let prov = Provenance {
        seed: 3,
        config_hash: cfg.hash(),
        config: cfg.clone(),
        split_hash: run.split_hash.clone(),
        created_at: "fixed".into(),
        flag_updated_at: None,
        tool_version: "acceptance".into(),
    };
    let artifact = Artifact::new(run.fitted, prov, &probes).unwrap();
    let loaded = Artifact::from_json(&artifact.to_json().unwrap()).unwrap();
    let exact = artifact.probes.len() == 16
        && loaded == artifact
        && loaded.verify_probes().is_ok()
        && artifact
            .probes
            .iter()
            .all(|pr| loaded.pipeline.score_raw(&pr.x).unwrap().to_bits() == pr.u_alpha.to_bits());

    let mut bcfg = cfg.clone();
    bcfg.benchmark.seeds = vec![1, 2, 3];
    let first = serde_json::to_string(&run_benchmark(&bcfg, Exec::Parallel, false).unwrap().results).unwrap();
    let second = serde_json::to_string(&run_benchmark(&bcfg, Exec::Parallel, false).unwrap().results).unwrap();
    let sequential = serde_json::to_string(&run_benchmark(&bcfg, Exec::Sequential, false).unwrap().results).unwrap();
    let same = first == second && first == sequential;
    vec![verdict(
        "C11",
        "artifact round trip and benchmark reruns are bit-identical",
        exact && same,
        format!("artifact probes exact: {exact}; benchmark JSON identical across reruns and exec modes: {same}"),
    )]
}

fn main() -> ExitCode {
    let groups: [fn() -> Vec<Verdict>; 7] = [marginal, consistency, certified, envelope, ranking, small_n2, determinism];
    let mut all = Vec::new();
    for g in groups {
        let start = Instant::now();
        let verdicts = g();
        let secs = start.elapsed().as_secs_f64();
        for v in verdicts {
            println!(
                "{} {:<4} {}: {} [{secs:.1}s]",
                if v.pass { "PASS" } else { "FAIL" },
                v.id,
                v.name,
                v.detail
            );
            all.push(v);
        }
    }
    let failed = all.iter().filter(|v| !v.pass).count();
    println!("acceptance: {} passed, {failed} failed", all.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
