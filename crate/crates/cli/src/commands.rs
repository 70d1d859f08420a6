use crate::args::{Cli, Command, ConfigArgs, FlagArgs, MethodArg};
use crate::{CliError, Outcome};
use locus_core::artifact::{Artifact, Provenance};
use locus_core::calibration::AggregationMode;
use locus_core::config::{FlagMethod, RunConfig};
use locus_core::dataset::{generate_synthetic, load_csv, load_features_csv, write_csv};
use locus_core::evaluation::benchmark::ScoreDump;
use locus_core::evaluation::run_benchmark;
use locus_core::flagging::{
    certify_lambda, default_alpha_grid, default_lambda_grid, default_rule, tune_alpha, tune_lambda, FlagRule,
    Threshold, TuneReport,
};
use locus_core::{pipeline, Exec};
use std::io::Write;
use std::path::{Path, PathBuf};

type CmdResult = Result<Outcome, CliError>;

/// Version tag of the `score` output layout.
pub const SCORE_CSV_HEADER: [&str; 5] = ["row", "u_alpha", "u_alpha_raw", "gamma", "accept"];

pub fn run(cli: Cli) -> CmdResult {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Calibrate { config, out } => calibrate(&config, &out, exec),
        Command::Score { artifact, input, out } => score(&artifact, &input, out.as_deref(), exec),
        Command::Flag(a) => flag(&a, a.method.unwrap_or(MethodArg::DefaultTau), exec),
        Command::Tune(a) => flag(&a, a.method.unwrap_or(MethodArg::TunedLambda), exec),
        Command::Certify(a) => {
            if a.method.is_some_and(|m| m != MethodArg::Certified) {
                return Err(CliError::validation("args", "certify only supports --method certified"));
            }
            flag(&a, MethodArg::Certified, exec)
        }
        Command::Benchmark {
            config,
            seeds,
            out,
            table,
            dump_scores,
        } => benchmark(&config, seeds, &out, table.as_deref(), dump_scores.as_deref(), exec),
        Command::Synth { preset, n, seed, out } => synth(preset.into(), n, seed, &out),
        Command::Inspect { artifact, json } => inspect(&artifact, json),
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::runtime("io", format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Config file (if any) plus flag overrides, validated.
pub fn effective_config(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            serde_json::from_str::<RunConfig>(&text).map_err(|e| CliError::validation("config", e))?
        }
        None => RunConfig::default(),
    };
    args.apply(&mut cfg).map_err(|e| CliError::validation("config", e))?;
    cfg.validate().map_err(|e| CliError::from_core("config", e))?;
    Ok(cfg)
}

fn load_artifact(path: &Path) -> Result<Artifact, CliError> {
    Artifact::load(path).map_err(|e| CliError::from_core("artifact", e))
}

fn calibrate(args: &ConfigArgs, out: &Path, exec: Exec) -> CmdResult {
    let cfg = effective_config(args)?;
    log::info!("fitting pipeline (seed {})", cfg.seed);
    let (data, run) = pipeline::run(&cfg, cfg.seed, exec)?;
    let probes = data.select(&run.splits.indices.test);
    let provenance = Provenance {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        config: cfg.clone(),
        split_hash: run.split_hash.clone(),
        created_at: now(),
        flag_updated_at: None,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let fitted = run.fitted;
    let artifact = Artifact::new(fitted, provenance, &probes).map_err(|e| CliError::from_core("artifact", e))?;
    artifact.save(out).map_err(|e| CliError::from_core("artifact", e))?;
    let p = &artifact.pipeline;
    println!("artifact: {}", out.display());
    println!("n1: {}", p.n1);
    println!("n2: {}", p.bound.n2());
    println!("alpha: {}", p.bound.alpha());
    println!("t: {}", p.bound.t());
    println!("tau: {} (raw units: {})", p.tau, p.to_raw_loss(p.tau));
    println!("config_hash: {}", artifact.provenance.config_hash);
    Ok(Outcome::Done)
}

fn score(artifact_path: &Path, input: &Path, out: Option<&Path>, exec: Exec) -> CmdResult {
    let artifact = load_artifact(artifact_path)?;
    let p = &artifact.pipeline;
    let x = load_features_csv(input, &p.feature_names).map_err(|e| CliError::from_core("input", e))?;
    let u = p.score_raw_batch(x.view(), exec).map_err(|e| CliError::from_core("score", e))?;
    let sink: Box<dyn Write> = match out {
        Some(path) => Box::new(std::fs::File::create(path).map_err(|e| io_err(path, e))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| CliError::runtime("output", e);
    w.write_record(SCORE_CSV_HEADER).map_err(csv_err)?;
    for (i, ui) in u.iter().enumerate() {
        let row = x.row(i).to_vec();
        let gamma = p.gamma_raw(&row).map_or_else(String::new, |g| g.to_string());
        let accept = artifact
            .flag_rule
            .as_ref()
            .map_or_else(String::new, |r| u8::from(r.accepts(*ui)).to_string());
        w.write_record([
            i.to_string(),
            ui.to_string(),
            p.to_raw_loss(*ui).to_string(),
            gamma,
            accept,
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::runtime("output", e))?;
    Ok(Outcome::Done)
}

fn default_report_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".report.json");
    PathBuf::from(s)
}

fn flag(args: &FlagArgs, method: MethodArg, exec: Exec) -> CmdResult {
    let mut artifact = load_artifact(&args.artifact)?;
    let mut fl = artifact.provenance.config.flagging.clone();
    fl.method = method.into();
    if let Some(e) = args.eta {
        fl.eta = e;
    }
    if let Some(d) = args.delta {
        fl.delta = d;
    }
    if let Some(r) = args.rho_min {
        fl.rho_min = r;
    }
    if let Some(g) = args.grid_size {
        fl.lambda_grid_size = g;
    }
    let mut cfg = artifact.provenance.config.clone();
    cfg.flagging = fl.clone();
    cfg.validate().map_err(|e| CliError::from_core("config", e))?;

    let tau = artifact.pipeline.tau;
    let alpha = artifact.pipeline.bound.alpha();
    let (rule, report): (FlagRule, Option<TuneReport>) = if fl.method == FlagMethod::DefaultTau {
        (default_rule(alpha, tau), None)
    } else {
        let path = args
            .validation
            .as_ref()
            .ok_or_else(|| CliError::validation("args", "this method needs --validation"))?;
        let p = &artifact.pipeline;
        let data = load_csv(path, &p.target_name).map_err(|e| CliError::from_core("validation", e))?;
        if data.feature_names != p.feature_names {
            return Err(CliError::validation(
                "validation",
                format!("feature columns {:?} differ from the artifact's {:?}", data.feature_names, p.feature_names),
            ));
        }
        let z = p.losses_raw(&data).map_err(|e| CliError::from_core("validation", e))?;
        let exceed: Vec<bool> = z.iter().map(|&v| v > tau).collect();
        let lambda_grid = |u: &[f64]| fl.lambda_grid.clone().unwrap_or_else(|| default_lambda_grid(u, fl.lambda_grid_size));
        let stage = "tune";
        let (rule, report) = match fl.method {
            FlagMethod::TunedLambda => {
                let u = p.score_raw_batch(data.features.view(), exec).map_err(|e| CliError::from_core("score", e))?;
                tune_lambda(&u, &exceed, &lambda_grid(&u), fl.eta, fl.rho_min, alpha)
            }
            FlagMethod::Certified => {
                let u = p.score_raw_batch(data.features.view(), exec).map_err(|e| CliError::from_core("score", e))?;
                certify_lambda(&u, &exceed, &lambda_grid(&u), fl.eta, fl.delta, alpha)
            }
            FlagMethod::TunedAlpha => {
                let xs = p.standardizer.transform_features(&data.features);
                let grid = fl.alpha_grid.clone().unwrap_or_else(default_alpha_grid);
                tune_alpha(&p.bound, tau, &grid, fl.eta, fl.rho_min, xs.view(), &z, exec)
            }
            FlagMethod::DefaultTau => unreachable!(),
        }
        .map_err(|e| CliError::from_core(stage, e))?;
        (rule, Some(report))
    };

    if rule.provenance == locus_core::flagging::Provenance::TunedAlpha && !rule.lambda.is_empty() {
        artifact.pipeline.bound = artifact
            .pipeline
            .bound
            .with_alpha(rule.alpha)
            .map_err(|e| CliError::from_core("tune", e))?;
        artifact.refresh_probes().map_err(|e| CliError::from_core("artifact", e))?;
    }
    artifact.provenance.config = cfg;
    artifact.provenance.config_hash = artifact.provenance.config.hash();
    artifact.provenance.flag_updated_at = Some(now());
    artifact.flag_rule = Some(rule.clone());
    let out = args.out.clone().unwrap_or_else(|| args.artifact.clone());
    artifact.save(&out).map_err(|e| CliError::from_core("artifact", e))?;

    if let Some(report) = &report {
        print!("{}", report.to_table());
        let rp = args.report.clone().unwrap_or_else(|| default_report_path(&out));
        let json = serde_json::to_string_pretty(report).map_err(|e| CliError::runtime("report", e))?;
        write_text(&rp, &(json + "\n"))?;
        println!("report: {}", rp.display());
    }
    println!("artifact: {}", out.display());
    match rule.lambda {
        Threshold::Value(l) => {
            println!("lambda: {l}");
            println!("alpha: {}", rule.alpha);
            Ok(Outcome::Done)
        }
        Threshold::Empty => {
            println!("lambda: EMPTY");
            eprintln!("EMPTY: no candidate meets the target; the rule accepts nothing");
            Ok(Outcome::Empty)
        }
    }
}

fn benchmark(
    args: &ConfigArgs,
    seeds: Option<Vec<u64>>,
    out: &Path,
    table: Option<&Path>,
    dump: Option<&Path>,
    exec: Exec,
) -> CmdResult {
    let mut cfg = effective_config(args)?;
    if let Some(s) = seeds {
        cfg.benchmark.seeds = s;
        cfg.validate().map_err(|e| CliError::from_core("config", e))?;
    }
    let output = run_benchmark(&cfg, exec, dump.is_some()).map_err(|e| CliError::from_core("benchmark", e))?;
    let mut results = output.results;
    for f in &results.failures {
        log::warn!("seed {} failed at {}: {}", f.seed, f.stage, f.message);
    }
    if !results.failures.is_empty() {
        eprintln!("warning: {} of {} seeds failed; see `failures` in the results", results.failures.len(), results.seeds.len());
    }
    results.generated_at = Some(now());
    let json = serde_json::to_string_pretty(&results).map_err(|e| CliError::runtime("benchmark", e))?;
    write_text(out, &(json + "\n"))?;
    let t = results.to_table();
    print!("{t}");
    if let Some(path) = table {
        write_text(path, &t)?;
    }
    if let (Some(path), Some(dumps)) = (dump, output.dumps) {
        let f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
        ScoreDump::write_csv(&dumps, f).map_err(|e| CliError::from_core("output", e))?;
    }
    println!("results: {}", out.display());
    if results.per_seed.is_empty() {
        return Err(CliError::runtime("benchmark", "every seed failed"));
    }
    Ok(Outcome::Done)
}

fn synth(preset: locus_core::config::SyntheticPreset, n: usize, seed: u64, out: &Path) -> CmdResult {
    let spec = preset.spec(n, seed);
    let data = generate_synthetic(&spec).map_err(|e| CliError::from_core("synth", e))?;
    write_csv(&data, out).map_err(|e| CliError::from_core("synth", e))?;
    println!("wrote {} rows to {}", data.n_rows(), out.display());
    Ok(Outcome::Done)
}

fn inspect(path: &Path, json: bool) -> CmdResult {
    let a = load_artifact(path)?;
    if json {
        println!("{}", a.to_json().map_err(|e| CliError::from_core("artifact", e))?);
        return Ok(Outcome::Done);
    }
    let p = &a.pipeline;
    let b = &p.bound;
    println!("schema_version: {}", a.schema_version);
    println!("features: {}", p.feature_names.join(", "));
    println!("target: {}", p.target_name);
    println!("loss: {:?}", p.loss);
    println!("predictor: {}", predictor_name(&p.predictor));
    println!("engine: {}", engine_name(b.engine()));
    println!(
        "aggregation: {}",
        match b.mode() {
            AggregationMode::Mean => "mean".to_string(),
            AggregationMode::Envelope { gamma } => match gamma {
                locus_core::calibration::GammaSource::Fixed { gamma } => format!("envelope (gamma = {gamma})"),
                locus_core::calibration::GammaSource::Scarcity { index } => format!(
                    "envelope (scarcity k = {}, q_lo = {}, q_hi = {})",
                    index.k(),
                    index.q_lo(),
                    index.q_hi()
                ),
            },
        }
    );
    println!("n1: {}", p.n1);
    println!("n2: {}", b.n2());
    println!("alpha: {}", b.alpha());
    println!("t: {}", b.t());
    println!("tau: {} (raw units: {})", p.tau, p.to_raw_loss(p.tau));
    match &a.flag_rule {
        Some(r) => println!(
            "flag rule: {:?}, lambda = {}",
            r.provenance,
            r.lambda.value().map_or_else(|| "EMPTY".to_string(), |v| v.to_string())
        ),
        None => println!("flag rule: none"),
    }
    println!("seed: {}", a.provenance.seed);
    println!("config_hash: {}", a.provenance.config_hash);
    println!("split_hash: {}", a.provenance.split_hash);
    println!("created_at: {}", a.provenance.created_at);
    println!("probes: {} (verified)", a.probes.len());
    Ok(Outcome::Done)
}

fn predictor_name(p: &locus_core::predictors::Predictor) -> String {
    match p {
        locus_core::predictors::Predictor::LinearOls { .. } => "linear_ols".into(),
        locus_core::predictors::Predictor::KnnRegressor { k, .. } => format!("knn_regressor (k = {k})"),
    }
}

fn engine_name(e: &locus_core::loss_engine::LossCdfEngine) -> String {
    use locus_core::loss_engine::{LossCdf, LossCdfEngine};
    match e {
        LossCdfEngine::BootstrapGaussianEnsemble(_) => format!("bootstrap_gaussian_ensemble ({} members)", e.n_draws()),
        LossCdfEngine::KnnEmpirical(k) => format!("knn_empirical (k = {})", k.k()),
    }
}
