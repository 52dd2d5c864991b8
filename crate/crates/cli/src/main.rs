//! `lagsr` command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! data and integrity errors. Logs go to standard error; results go under
//! `--out-dir`, next to a `run.json` echo of the resolved invocation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use lagsr::data::{detect_interval, ingest_csv, repair, write_gap_report, CsvSchema, JunctionManifest, TimeRange, WindowSpec};
use lagsr::experiments::{
    fit_models, run_scenario, score, write_outputs, DatasetSource, Experiment, HwSettings, Method, Scenario,
};
use lagsr::expr::{parse, simplify, structure_stats, ExprTree};
use lagsr::gp::GpConfig;
use lagsr::metrics::{summarize_runs, EvalReport};
use lagsr::model::{load_expressions, load_sidecar, save_model, FittedModel, Sidecar};
use lagsr::synth::{generate, write_dataset_csv, SynthProfile};
use lagsr::Error;

#[derive(Parser, Debug)]
#[command(name = "lagsr", version, about = "Lag-aware symbolic regression for junction traffic")]
struct Cli {
    /// Base seed for GP runs and synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with `[data]`, `[gp]` and `[hw]` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
enum Command {
    /// Repair and aggregate raw sensor counts into per-junction CSVs.
    Ingest(IngestArgs),
    /// Generate a synthetic junction.
    Synth(SynthArgs),
    /// Train one method and score it on a test window.
    Train(TrainArgs),
    /// Score a saved model on a test window.
    Evaluate(EvaluateArgs),
    /// Train on each junction and test on every junction.
    Transfer(TransferArgs),
    /// Run a scenario manifest.
    Scenario(ScenarioArgs),
    /// Print a saved model's formula and structure.
    Inspect(InspectArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct DataArgs {
    /// Long-format sensor CSV (`timestamp,sensor_id,count`).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Junction manifest (TOML or JSON).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Grid of the CSV in minutes; inferred when omitted.
    #[arg(long)]
    raw_interval: Option<u32>,
}

#[derive(Args, Debug, Serialize)]
struct IngestArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Junction to extract; every junction of the manifest when omitted.
    #[arg(long)]
    junction: Option<String>,
    /// Target sampling interval in minutes.
    #[arg(long)]
    interval: Option<u32>,
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    /// Profile TOML; the flags below are ignored when given.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, default_value = "S")]
    junction: String,
    #[arg(long, default_value_t = 3)]
    arity: usize,
    #[arg(long, default_value_t = 28)]
    days: usize,
    #[arg(long, default_value_t = 15)]
    interval: u32,
    /// Ground-truth expression over the arms.
    #[arg(long, default_value = "0.5 * x0 + 0.3 * lag(x0) + x1 + 2")]
    truth: String,
    /// Output noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct GpOverrides {
    /// Independent GP runs.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    junction: String,
    #[arg(long)]
    interval: Option<u32>,
    /// Training range `YYYY-MM-DD..YYYY-MM-DD` (last day included); repeat
    /// for a gapped window.
    #[arg(long = "train", required = true)]
    train: Vec<TimeRange>,
    #[arg(long)]
    test: TimeRange,
    /// HW, LR, SR or SL.
    #[arg(long, default_value = "SL")]
    method: Method,
    #[command(flatten)]
    gp: GpOverrides,
}

#[derive(Args, Debug, Serialize)]
struct EvaluateArgs {
    /// Model file (`.sl`); its JSON sidecar is used when present.
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Defaults to the sidecar's junction.
    #[arg(long)]
    junction: Option<String>,
    /// Defaults to the sidecar's interval.
    #[arg(long)]
    interval: Option<u32>,
    #[arg(long)]
    test: TimeRange,
}

#[derive(Args, Debug, Serialize)]
struct TransferArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated junction ids.
    #[arg(long, value_delimiter = ',', required = true)]
    junctions: Vec<String>,
    #[arg(long)]
    interval: Option<u32>,
    #[arg(long)]
    train: TimeRange,
    #[arg(long)]
    test: TimeRange,
    #[arg(long = "method", default_values = ["SL"])]
    methods: Vec<Method>,
    #[command(flatten)]
    gp: GpOverrides,
}

#[derive(Args, Debug, Serialize)]
struct ScenarioArgs {
    /// Scenario manifest (TOML).
    manifest: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct InspectArgs {
    model: PathBuf,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataConfig {
    csv: Option<PathBuf>,
    manifest: Option<PathBuf>,
    raw_interval: Option<u32>,
}

/// Contents of `--config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    data: DataConfig,
    gp: GpConfig,
    hw: HwSettings,
    confidence: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data: DataConfig::default(),
            gp: GpConfig::default(),
            hw: HwSettings::default(),
            confidence: 0.95,
        }
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config: Config = toml::from_str(&text).map_err(Error::from)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for p in [&mut config.data.csv, &mut config.data.manifest].into_iter().flatten() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(config)
}

struct Ctx {
    seed: Option<u64>,
    out_dir: PathBuf,
    jobs: Option<usize>,
    config: Config,
}

impl Ctx {
    fn gp(&self, o: &GpOverrides) -> Result<GpConfig> {
        let mut gp = self.config.gp.clone();
        if let Some(s) = self.seed {
            gp.rng_seed = s;
        }
        if let Some(r) = o.runs {
            gp.runs = r;
        }
        if let Some(p) = o.population {
            gp.population_size = p;
        }
        if let Some(g) = o.generations {
            gp.generations = g;
        }
        gp.validate()?;
        Ok(gp)
    }

    fn source(&self, data: &DataArgs, junction: &str, interval: Option<u32>) -> Result<DatasetSource> {
        let csv = data.csv.clone().or_else(|| self.config.data.csv.clone());
        let manifest = data.manifest.clone().or_else(|| self.config.data.manifest.clone());
        let (Some(csv), Some(manifest)) = (csv, manifest) else {
            return Err(usage(
                "no data source: pass --csv and --manifest, or set them under [data] in --config",
            ));
        };
        Ok(DatasetSource::Csv {
            csv,
            manifest,
            junction: junction.to_string(),
            raw_interval: data.raw_interval.or(self.config.data.raw_interval),
            interval,
        })
    }

    fn write_run_json(&self, command: &Command) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        let manifest = json!({
            "tool": "lagsr",
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "jobs": self.jobs,
            "out_dir": self.out_dir,
            "config": self.config,
            "invocation": command,
        });
        std::fs::write(
            self.out_dir.join("run.json"),
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?;
        Ok(())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            let usage = e.downcast_ref::<Error>().is_some_and(Error::is_usage);
            ExitCode::from(if usage { 1 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting the worker pool")?;
    }
    let ctx = Ctx {
        seed: cli.seed,
        out_dir: cli.out_dir,
        jobs: cli.jobs,
        config: load_config(cli.config.as_deref())?,
    };
    ctx.write_run_json(&cli.command)?;
    match &cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Synth(a) => synth(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Evaluate(a) => evaluate_model(&ctx, a),
        Command::Transfer(a) => transfer(&ctx, a),
        Command::Scenario(a) => scenario(&ctx, a),
        Command::Inspect(a) => inspect(a),
    }
}

#[derive(Serialize)]
struct ManifestList<'a> {
    junctions: &'a [JunctionManifest],
}

fn write_manifest(path: &Path, manifests: &[JunctionManifest]) -> Result<()> {
    let text = toml::to_string(&ManifestList { junctions: manifests }).map_err(Error::from)?;
    std::fs::write(path, text)?;
    Ok(())
}

fn ingest(ctx: &Ctx, a: &IngestArgs) -> Result<()> {
    let probe = ctx.source(&a.data, "", a.interval)?;
    let DatasetSource::Csv { csv, manifest, raw_interval, .. } = &probe else {
        unreachable!("CLI sources are CSV files");
    };
    let manifests = match &a.junction {
        Some(j) => vec![JunctionManifest::load(manifest, j)?],
        None => JunctionManifest::load_all(manifest)?,
    };

    let bytes = std::fs::read(csv).with_context(|| format!("reading {}", csv.display()))?;
    let raw = match raw_interval {
        Some(i) => *i,
        None => detect_interval(&bytes[..], "timestamp")?,
    };
    let (_, gaps) = repair(&ingest_csv(&bytes[..], &CsvSchema::with_interval(raw))?)?;
    std::fs::create_dir_all(&ctx.out_dir)?;
    write_gap_report(&gaps, std::fs::File::create(ctx.out_dir.join("gaps.csv"))?)?;
    log::info!("{} gap run(s) repaired", gaps.len());

    for m in &manifests {
        let source = ctx.source(&a.data, &m.junction_id, a.interval)?;
        let dataset = source.load()?;
        let path = ctx.out_dir.join(format!("{}.csv", m.junction_id));
        write_dataset_csv(&dataset, std::fs::File::create(&path)?)?;
        write_manifest(&ctx.out_dir.join(format!("{}.manifest.toml", m.junction_id)), &[dataset.manifest()])?;
        println!(
            "{}: {} samples at {} min, {} inputs -> {}",
            m.junction_id,
            dataset.len(),
            dataset.interval(),
            dataset.arity(),
            path.display()
        );
    }
    Ok(())
}

fn synth(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    let mut profile = match &a.profile {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<SynthProfile>(&text).map_err(Error::from)?
        }
        None => SynthProfile::new(
            a.junction.clone(),
            a.arity,
            a.days,
            a.interval,
            parse(&a.truth).map_err(|e| usage(format!("--truth: {e}")))?,
            a.noise,
            0,
        ),
    };
    if let Some(s) = ctx.seed {
        profile.seed = s;
    }
    profile.validate()?;
    let dataset = generate(&profile)?;
    std::fs::create_dir_all(&ctx.out_dir)?;
    let id = &profile.junction_id;
    let path = ctx.out_dir.join(format!("{id}.csv"));
    write_dataset_csv(&dataset, std::fs::File::create(&path)?)?;
    write_manifest(&ctx.out_dir.join(format!("{id}.manifest.toml")), &[dataset.manifest()])?;
    std::fs::write(ctx.out_dir.join(format!("{id}.profile.toml")), toml::to_string(&profile).map_err(Error::from)?)?;
    println!("{id}: {} samples, truth {} -> {}", dataset.len(), profile.ground_truth, path.display());
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn report_record(r: &EvalReport) -> [String; 5] {
    [fmt(r.rmse), fmt(r.mae), fmt(r.stdev_abs_err), fmt(r.r_squared), r.n.to_string()]
}

fn argmin(reports: &[EvalReport]) -> Option<usize> {
    reports
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.rmse.is_nan())
        .min_by(|a, b| a.1.rmse.total_cmp(&b.1.rmse))
        .map(|(i, _)| i)
}

fn train(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let gp = ctx.gp(&a.gp)?;
    let dataset = ctx.source(&a.data, &a.junction, a.interval)?.load()?;
    let spec = WindowSpec::new(a.train.clone(), a.test);
    let models = fit_models(a.method, &dataset, &spec, &gp, &ctx.config.hw)?;
    let reports = models
        .iter()
        .map(|m| score(m, &dataset, a.test))
        .collect::<lagsr::Result<Vec<_>>>()?;
    let best = argmin(&reports).ok_or_else(|| Error::Integrity("no model produced a finite test error".into()))?;
    let summary = summarize_runs(&reports, ctx.config.confidence)?;

    let stem = format!("{}_{}", a.junction, a.method);
    let models_dir = ctx.out_dir.join("models");
    let seed = if a.method.is_gp() { gp.rng_seed.wrapping_add(best as u64) } else { gp.rng_seed };
    let sidecar = Sidecar {
        junction_id: a.junction.clone(),
        interval: dataset.interval(),
        method: a.method.to_string(),
        train_window: a.train.clone(),
        test_window: Some(a.test),
        metrics: Some(reports[best].clone()),
        seed: Some(seed),
        model: models[best].clone(),
    };
    save_model(&models_dir.join(format!("{stem}.sl")), &sidecar)?;
    if models.len() > 1 {
        let all: String = models
            .iter()
            .filter_map(FittedModel::expression)
            .map(|t| format!("{t}\n"))
            .collect();
        std::fs::write(models_dir.join(format!("{stem}_runs.sl")), all)?;
    }

    let tables = ctx.out_dir.join("tables");
    std::fs::create_dir_all(&tables)?;
    let mut w = csv::Writer::from_path(tables.join("eval.csv"))?;
    w.write_record([
        "method", "junction", "interval", "train_window", "test_window", "seed", "runs", "rmse_mean",
        "rmse_ci", "mae_mean", "mae_ci", "best_rmse", "best_mae", "best_stdev", "best_r2", "n",
    ])?;
    let mut rec = vec![
        a.method.to_string(),
        a.junction.clone(),
        dataset.interval().to_string(),
        a.train.iter().map(ToString::to_string).collect::<Vec<_>>().join("+"),
        a.test.to_string(),
        gp.rng_seed.to_string(),
        reports.len().to_string(),
        fmt(summary.mean_rmse),
        fmt(summary.ci_rmse),
        fmt(summary.mean_mae),
        fmt(summary.ci_mae),
    ];
    rec.extend(report_record(&reports[best]));
    w.write_record(&rec)?;
    w.flush()?;

    println!(
        "{} on {}: RMSE {:.4} ± {:.4}, MAE {:.4} ± {:.4} over {} run(s); best RMSE {:.4}",
        a.method,
        a.junction,
        summary.mean_rmse,
        summary.ci_rmse,
        summary.mean_mae,
        summary.ci_mae,
        summary.runs,
        reports[best].rmse
    );
    if let Some(tree) = models[best].expression() {
        println!("best: {tree}");
    }
    Ok(())
}

fn evaluate_model(ctx: &Ctx, a: &EvaluateArgs) -> Result<()> {
    let sidecar = load_sidecar(&a.model).ok();
    let models: Vec<FittedModel> = match &sidecar {
        Some(s) => vec![s.model.clone()],
        None => load_expressions(&a.model)?
            .into_iter()
            .map(|tree| FittedModel::Expr { tree })
            .collect(),
    };
    if models.is_empty() {
        return Err(Error::Integrity(format!("{} holds no model", a.model.display())).into());
    }
    let junction = a
        .junction
        .clone()
        .or_else(|| sidecar.as_ref().map(|s| s.junction_id.clone()))
        .ok_or_else(|| usage("--junction is required for a model without a sidecar"))?;
    let interval = a.interval.or(sidecar.as_ref().map(|s| s.interval));
    let dataset = ctx.source(&a.data, &junction, interval)?.load()?;

    let tables = ctx.out_dir.join("tables");
    std::fs::create_dir_all(&tables)?;
    let mut w = csv::Writer::from_path(tables.join("evaluate.csv"))?;
    w.write_record(["model", "junction", "interval", "test_window", "rmse", "mae", "stdev", "r2", "n"])?;
    for (i, m) in models.iter().enumerate() {
        let r = score(m, &dataset, a.test)?;
        let mut rec = vec![
            format!("{}#{i}", a.model.display()),
            junction.clone(),
            dataset.interval().to_string(),
            a.test.to_string(),
        ];
        rec.extend(report_record(&r));
        w.write_record(&rec)?;
        println!(
            "model {i}: RMSE {:.4}  MAE {:.4}  StDev {:.4}  R² {:.4}  (n = {})",
            r.rmse, r.mae, r.stdev_abs_err, r.r_squared, r.n
        );
    }
    w.flush()?;
    Ok(())
}

fn transfer(ctx: &Ctx, a: &TransferArgs) -> Result<()> {
    let datasets = a
        .junctions
        .iter()
        .map(|j| ctx.source(&a.data, j, a.interval))
        .collect::<Result<Vec<_>>>()?;
    let scenario = Scenario {
        name: "transfer".into(),
        methods: a.methods.clone(),
        seed: ctx.seed,
        gp: ctx.gp(&a.gp)?,
        hw: ctx.config.hw.clone(),
        confidence: ctx.config.confidence,
        experiment: Experiment::TransferMatrix {
            train: a.train,
            test: a.test,
        },
        datasets,
    };
    let outcome = run_scenario(&scenario)?;
    write_outputs(&scenario, &outcome, &ctx.out_dir)?;
    for m in &outcome.transfer {
        println!("{} test RMSE (rows: trained on, columns: tested on)", m.method);
        println!("{:>10} {}", "", m.junctions.iter().map(|j| format!("{j:>10}")).collect::<String>());
        for (j, row) in m.junctions.iter().zip(&m.rmse) {
            println!("{j:>10} {}", row.iter().map(|v| format!("{v:>10.4}")).collect::<String>());
        }
    }
    Ok(())
}

fn scenario(ctx: &Ctx, a: &ScenarioArgs) -> Result<()> {
    let mut scenario = Scenario::load(&a.manifest)?;
    if ctx.seed.is_some() {
        scenario.seed = ctx.seed;
    }
    let outcome = run_scenario(&scenario)?;
    write_outputs(&scenario, &outcome, &ctx.out_dir)?;
    for r in &outcome.rows {
        println!(
            "{:<3} {:<10} {:>3} min {:<20} RMSE {:>9.4} ± {:<8.4} MAE {:>9.4} ± {:<8.4} best {:>9.4}",
            r.method.to_string(),
            r.junction,
            r.interval,
            r.variant,
            r.rmse_mean,
            r.rmse_ci,
            r.mae_mean,
            r.mae_ci,
            r.best_rmse
        );
    }
    println!("tables written to {}", ctx.out_dir.join("tables").display());
    Ok(())
}

fn describe(tree: &ExprTree) {
    let s = structure_stats(tree);
    println!("formula:    {tree}");
    println!("simplified: {}", simplify(tree).tree);
    println!("depth:      {}", s.depth);
    println!("nodes:      {}", s.node_count);
    println!("lags:       {}", s.lag_count);
    let inputs: Vec<String> = s
        .input_occurrences
        .iter()
        .enumerate()
        .filter(|(_, n)| **n > 0)
        .map(|(k, n)| format!("x{k}:{n}"))
        .collect();
    println!("inputs:     {}", if inputs.is_empty() { "none".into() } else { inputs.join(" ") });
}

fn inspect(a: &InspectArgs) -> Result<()> {
    let trees = load_expressions(&a.model)?;
    if let Ok(s) = load_sidecar(&a.model) {
        println!("method:     {} on {} at {} min", s.method, s.junction_id, s.interval);
        let windows: Vec<String> = s.train_window.iter().map(ToString::to_string).collect();
        println!("trained:    {}", windows.join(" + "));
        if let Some(m) = &s.metrics {
            println!("test:       RMSE {:.4}  MAE {:.4}  R² {:.4}", m.rmse, m.mae, m.r_squared);
        }
        if let FittedModel::HoltWinters { params, mode, .. } = &s.model {
            println!(
                "HW:         α {} β {} γ {}  L {}  {mode}",
                params.alpha, params.beta, params.gamma, params.season_length
            );
        }
    }
    if trees.is_empty() && load_sidecar(&a.model).is_err() {
        return Err(Error::Integrity(format!("{} holds no model", a.model.display())).into());
    }
    for (i, t) in trees.iter().enumerate() {
        if trees.len() > 1 {
            println!("-- model {i}");
        }
        describe(t);
    }
    Ok(())
}
