//! Command-line interface: simulation studies (`run`), chain fitting on CSV
//! data (`fit`), and held-out prediction (`predict`). Every flag can also be
//! set from a TOML config file; explicit flags win.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use balasso::data::StandardizeMode;
use balasso::harness::{
    load_csv, run_experiment, CsvSchema, ExperimentOptions, Method, ScenarioId, ScenarioSpec,
};
use balasso::inference::{
    estimate_pmp, select_freq, select_point, ModeObjective, ModeProblem, PointStatistic,
    SelectionResult,
};
use balasso::linear::run_chain_linear;
use balasso::penalty::{DeltaSetting, PenaltyMode, SaSchedule};
use balasso::persistence::save_chain;
use balasso::{ChainConfig, ChainStore, Dataset, RngHandle, SolverConfig};

#[derive(Parser)]
#[command(
    name = "balasso",
    version,
    about = "Bayesian adaptive lasso: chains, selection, model averaging"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in simulation scenario over many replications.
    Run(RunArgs),
    /// Fit a chain to a CSV dataset and report selections.
    Fit(FitArgs),
    /// Fit on a training CSV and predict a test CSV.
    Predict(PredictArgs),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Scenario id: ex1, ex2, ex3, ex4-small, ex4-large, ex7, ex8, ex9, fig2
    #[arg(long)]
    scenario: Option<String>,
    /// Training sample size
    #[arg(long)]
    n: Option<usize>,
    /// Noise standard deviation
    #[arg(long)]
    sigma: Option<f64>,
    /// Replication count
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated methods: freq,median,mean,eb,bma,blasso,lasso,alasso
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.csv, report.txt, meta.txt
    #[arg(long)]
    out: Option<PathBuf>,
    /// Burn-in sweeps per chain
    #[arg(long)]
    burnin: Option<usize>,
    /// Kept draws per chain
    #[arg(long)]
    draws: Option<usize>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// TOML config with a [run] section mirroring these flags
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    scenario: Option<String>,
    n: Option<usize>,
    sigma: Option<f64>,
    reps: Option<usize>,
    methods: Option<String>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    burnin: Option<usize>,
    draws: Option<usize>,
    threads: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct FitArgs {
    /// CSV file with a header row
    #[arg(long)]
    data: Option<PathBuf>,
    /// Response column name
    #[arg(long)]
    response: Option<String>,
    /// Predictor column names (comma-separated; default: all others)
    #[arg(long)]
    predictors: Option<String>,
    /// 1-based observation numbers to drop before fitting
    #[arg(long)]
    drop_rows: Option<String>,
    /// center (default) or center-and-scale
    #[arg(long)]
    standardize: Option<String>,
    /// Penalty regime: hierarchical (default), hierarchical-single, eb-em,
    /// eb-sa, or fixed:<lambda2,...>
    #[arg(long)]
    mode: Option<String>,
    /// Hyperprior shape r
    #[arg(long)]
    r: Option<f64>,
    /// Hyperprior rate delta: a number, or "eb" for the empirical-Bayes
    /// update (default)
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (chains/, selection.csv, pmp.csv)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FitConfig {
    data: Option<PathBuf>,
    response: Option<String>,
    predictors: Option<String>,
    drop_rows: Option<String>,
    standardize: Option<String>,
    mode: Option<String>,
    r: Option<f64>,
    delta: Option<String>,
    burnin: Option<usize>,
    draws: Option<usize>,
    thin: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct PredictArgs {
    /// Training CSV
    #[arg(long)]
    train: Option<PathBuf>,
    /// Test CSV (same columns; response optional for scoring)
    #[arg(long)]
    test: Option<PathBuf>,
    /// bma (default), mean, median, or eb
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    response: Option<String>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for predictions.csv
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct PredictConfig {
    train: Option<PathBuf>,
    test: Option<PathBuf>,
    strategy: Option<String>,
    response: Option<String>,
    burnin: Option<usize>,
    draws: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    run: RunConfig,
    #[serde(default)]
    fit: FitConfig,
    #[serde(default)]
    predict: PredictConfig,
}

fn load_config(path: &Option<PathBuf>) -> Result<ConfigFile> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

/// Flags override config: take the flag when present, else config, else default.
fn pick<T>(flag: Option<T>, cfg: Option<T>, default: T) -> T {
    flag.or(cfg).unwrap_or(default)
}

fn pick_required<T>(flag: Option<T>, cfg: Option<T>, what: &str) -> Result<T> {
    flag.or(cfg)
        .with_context(|| format!("missing required option --{what} (flag or config)"))
}

fn parse_mode(mode: &str, r: f64, delta: &str) -> Result<PenaltyMode> {
    let delta_setting = if delta == "eb" {
        DeltaSetting::eb1_default()
    } else {
        DeltaSetting::Fixed(
            delta
                .parse::<f64>()
                .with_context(|| format!("delta must be a number or 'eb', got '{delta}'"))?,
        )
    };
    if let Some(rest) = mode.strip_prefix("fixed:") {
        let vals: Vec<f64> = rest
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .context("fixed mode wants comma-separated lambda2 values")?;
        return Ok(PenaltyMode::Fixed {
            lambda2: nalgebra::DVector::from_vec(vals),
        });
    }
    match mode {
        "hierarchical" => Ok(PenaltyMode::Hierarchical {
            r,
            delta: delta_setting,
        }),
        "hierarchical-single" => Ok(PenaltyMode::HierarchicalShared {
            r,
            delta: delta_setting,
        }),
        "eb-em" => Ok(PenaltyMode::eb_em_default()),
        "eb-sa" => Ok(PenaltyMode::EbSa {
            schedule: SaSchedule::default(),
        }),
        other => bail!("unknown mode '{other}'"),
    }
}

/// sha256 of a canonical rendering; ties outputs to their settings.
fn config_hash(parts: &[(&str, String)]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for (k, v) in parts {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn write_meta(dir: &Path, parts: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut text = String::new();
    for (k, v) in parts {
        let _ = writeln!(text, "{k} = {v}");
    }
    let _ = writeln!(text, "config_hash = {}", config_hash(parts));
    let _ = writeln!(text, "software_version = {}", env!("CARGO_PKG_VERSION"));
    let created = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let _ = writeln!(text, "created_unix = {created}");
    std::fs::write(dir.join("meta.txt"), text)?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let cfg = load_config(&args.config)?.run;
    let scenario = pick_required(args.scenario, cfg.scenario, "scenario")?;
    let id = ScenarioId::parse(&scenario)?;
    let n = pick_required(args.n, cfg.n, "n")?;
    let sigma = pick(args.sigma, cfg.sigma, 1.0);
    let reps = pick(args.reps, cfg.reps, 100);
    let methods_str = pick(args.methods, cfg.methods, "mean".to_string());
    let methods = Method::parse_list(&methods_str)?;
    let seed = pick(args.seed, cfg.seed, 17);
    let out = pick_required(args.out, cfg.out, "out")?;
    let burnin = pick(args.burnin, cfg.burnin, 1000);
    let draws = pick(args.draws, cfg.draws, 2000);
    if let Some(threads) = args.threads.or(cfg.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring worker threads")?;
    }

    let spec = ScenarioSpec {
        id,
        n,
        sigma,
        reps,
        seed,
    };
    let opts = ExperimentOptions {
        burn_in: burnin,
        kept: draws,
        ..ExperimentOptions::default()
    };
    let table = run_experiment(&spec, &methods, &opts, Some(&out))?;
    write_meta(
        &out,
        &[
            ("command", "run".to_string()),
            ("scenario", scenario.clone()),
            ("n", n.to_string()),
            ("sigma", sigma.to_string()),
            ("reps", reps.to_string()),
            ("methods", methods_str.clone()),
            ("seed", seed.to_string()),
            ("burnin", burnin.to_string()),
            ("draws", draws.to_string()),
        ],
    )?;
    print!("{table}");
    println!("written: {}", out.display());
    Ok(())
}

fn load_dataset(
    path: &Path,
    response: &str,
    predictors: &Option<String>,
    drop_rows: &Option<String>,
) -> Result<Dataset> {
    let mut schema = CsvSchema::new(response);
    if let Some(preds) = predictors {
        schema.predictors = preds.split(',').map(|s| s.trim().to_string()).collect();
    }
    if let Some(rows) = drop_rows {
        schema.drop_rows = rows
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .context("drop-rows wants comma-separated 1-based integers")?;
    }
    Ok(load_csv(path, &schema)?)
}

fn selection_csv(selections: &[SelectionResult]) -> String {
    let p = selections.first().map(|s| s.beta.len()).unwrap_or(0);
    let k = selections.first().map(|s| s.lambda.len()).unwrap_or(0);
    let mut out = String::from("strategy,pattern");
    for j in 1..=k {
        let _ = write!(out, ",lambda_{j}");
    }
    for j in 1..=p {
        let _ = write!(out, ",beta_{j}");
    }
    out.push('\n');
    for s in selections {
        let _ = write!(out, "{},{}", s.strategy, s.pattern.to_01_string());
        for v in s.lambda.iter() {
            let _ = write!(out, ",{v}");
        }
        for v in s.beta.iter() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn fit_chain(
    data: &Dataset,
    mode: &PenaltyMode,
    burnin: usize,
    draws: usize,
    thin: usize,
    seed: u64,
) -> Result<ChainStore> {
    Ok(run_chain_linear(
        data,
        mode,
        &ChainConfig::new(burnin, draws, thin, RngHandle::new(seed, 0)),
    )?)
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let cfg = load_config(&args.config)?.fit;
    let data_path = pick_required(args.data, cfg.data, "data")?;
    let response = pick_required(args.response, cfg.response, "response")?;
    let predictors = args.predictors.or(cfg.predictors);
    let drop_rows = args.drop_rows.or(cfg.drop_rows);
    let standardize = pick(args.standardize, cfg.standardize, "center".to_string());
    let mode_str = pick(args.mode, cfg.mode, "hierarchical".to_string());
    let r = pick(args.r, cfg.r, 0.1);
    let delta = pick(args.delta, cfg.delta, "eb".to_string());
    let burnin = pick(args.burnin, cfg.burnin, 10_000);
    let draws = pick(args.draws, cfg.draws, 10_000);
    let thin = pick(args.thin, cfg.thin, 1);
    let seed = pick(args.seed, cfg.seed, 17);
    let out = pick_required(args.out, cfg.out, "out")?;

    let raw = load_dataset(&data_path, &response, &predictors, &drop_rows)?;
    let std_mode = match standardize.as_str() {
        "center" => StandardizeMode::Center,
        "center-and-scale" => StandardizeMode::CenterAndScale,
        other => bail!("unknown standardize mode '{other}'"),
    };
    let data = raw.standardize(std_mode)?;
    let mode = parse_mode(&mode_str, r, &delta)?;
    let store = fit_chain(&data, &mode, burnin, draws, thin, seed)?;

    std::fs::create_dir_all(&out)?;
    let manifest = save_chain(&store, &out.join("chains"))?;

    let problem = ModeProblem::Linear { data: &data };
    let solver = SolverConfig::default();
    let objective = ModeObjective::default();
    let mut selections = vec![
        select_point(&store, &problem, PointStatistic::Mean, objective, &solver)?,
        select_point(&store, &problem, PointStatistic::Median, objective, &solver)?,
        select_freq(&store, &problem, 0.5, objective, &solver)?,
    ];
    if store.meta.eb_lambda.is_some() {
        selections.push(select_point(
            &store,
            &problem,
            PointStatistic::EbPoint,
            objective,
            &solver,
        )?);
    }
    std::fs::write(out.join("selection.csv"), selection_csv(&selections))?;

    let pmp = estimate_pmp(&store, &problem, objective, &solver)?;
    let mut pmp_csv = String::from("pattern,probability\n");
    for (pattern, prob) in pmp.iter().take(50) {
        let _ = writeln!(pmp_csv, "{},{prob}", pattern.to_01_string());
    }
    std::fs::write(out.join("pmp.csv"), pmp_csv)?;

    write_meta(
        &out,
        &[
            ("command", "fit".to_string()),
            ("data", data_path.display().to_string()),
            ("response", response.clone()),
            ("standardize", standardize.clone()),
            ("mode", mode.describe()),
            ("burnin", burnin.to_string()),
            ("draws", draws.to_string()),
            ("thin", thin.to_string()),
            ("seed", seed.to_string()),
            ("chain_config_hash", manifest.config_hash.clone()),
            ("dataset_fingerprint", data.fingerprint()),
        ],
    )?;

    println!(
        "chain: {} draws, config hash {}",
        store.len(),
        manifest.config_hash
    );
    for s in &selections {
        println!(
            "{:>7}: pattern {} ({} selected)",
            s.strategy,
            s.pattern.to_01_string(),
            s.pattern.count_selected()
        );
    }
    println!("written: {}", out.display());
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let cfg = load_config(&args.config)?.predict;
    let train_path = pick_required(args.train, cfg.train, "train")?;
    let test_path = pick_required(args.test, cfg.test, "test")?;
    let strategy = pick(args.strategy, cfg.strategy, "bma".to_string());
    let response = pick(args.response, cfg.response, "y".to_string());
    let burnin = pick(args.burnin, cfg.burnin, 10_000);
    let draws = pick(args.draws, cfg.draws, 10_000);
    let seed = pick(args.seed, cfg.seed, 17);
    let out = args.out.or(cfg.out);

    let train_raw = load_dataset(&train_path, &response, &None, &None)?;
    let data = train_raw.standardize(StandardizeMode::Center)?;

    // test file: same response column if present (for scoring), else
    // predictors only
    let test_schema = CsvSchema::new(&response);
    let (x_test, y_test) = match load_csv(&test_path, &test_schema) {
        Ok(ds) => (ds.x.clone(), Some(ds.y.clone())),
        Err(_) => {
            // no response column: read every column as a predictor by
            // borrowing the training header order
            bail!(
                "test file {} must contain the response column '{}' and the training predictors",
                test_path.display(),
                response
            );
        }
    };

    let mode = if strategy == "eb" {
        PenaltyMode::EbSa {
            schedule: SaSchedule::default(),
        }
    } else {
        PenaltyMode::hierarchical_default()
    };
    let store = fit_chain(&data, &mode, burnin, draws, 1, seed)?;
    let problem = ModeProblem::Linear { data: &data };
    let solver = SolverConfig::default();
    let objective = ModeObjective::default();

    let beta = match strategy.as_str() {
        "bma" => {
            let modes =
                balasso::inference::conditional_modes(&store, &problem, objective, &solver)?;
            let mut mean_beta = nalgebra::DVector::zeros(data.p());
            for b in &modes.betas {
                mean_beta += b;
            }
            mean_beta / modes.betas.len() as f64
        }
        "mean" => select_point(&store, &problem, PointStatistic::Mean, objective, &solver)?.beta,
        "median" => {
            select_point(&store, &problem, PointStatistic::Median, objective, &solver)?.beta
        }
        "eb" => {
            select_point(
                &store,
                &problem,
                PointStatistic::EbPoint,
                objective,
                &solver,
            )?
            .beta
        }
        other => bail!("unknown strategy '{other}' (expected bma, mean, median, eb)"),
    };
    let preds = data.predict_raw(&x_test, &beta)?;

    let mut csv = String::from("row,prediction");
    if y_test.is_some() {
        csv.push_str(",actual");
    }
    csv.push('\n');
    for i in 0..preds.len() {
        let _ = write!(csv, "{},{}", i + 1, preds[i]);
        if let Some(y) = &y_test {
            let _ = write!(csv, ",{}", y[i]);
        }
        csv.push('\n');
    }
    if let Some(dir) = &out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("predictions.csv"), &csv)?;
        write_meta(
            dir,
            &[
                ("command", "predict".to_string()),
                ("train", train_path.display().to_string()),
                ("test", test_path.display().to_string()),
                ("strategy", strategy.clone()),
                ("burnin", burnin.to_string()),
                ("draws", draws.to_string()),
                ("seed", seed.to_string()),
            ],
        )?;
        println!("written: {}", dir.display());
    } else {
        print!("{csv}");
    }
    if let Some(y) = &y_test {
        let pse = balasso::inference::compute_pse(&preds, y)?;
        println!("PSE ({strategy}): {pse:.6}");
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
