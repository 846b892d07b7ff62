//! Command-line entry point: `train`, `analyze-rs`, `active`, `eval` and
//! `gen-data`.
//!
//! Exit codes: 0 success, 1 any other failure, 2 missing task file (and
//! usage errors), 3 RS search budget exceeded, 4 checkpoint/task hash
//! mismatch.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::active::{active_loop, write_curves, CurveRows, Strategy};
use crate::bears::{train_ensemble, BearsError, Ensemble, EnsembleConfig, Method};
use crate::metrics::{evaluate, write_reports, EvalContext, MetricsReport, DEFAULT_BINS};
use crate::presets;
use crate::rs::{analyze, RsError, DEFAULT_NODE_BUDGET};
use crate::tasks::{generate_dataset, SplitName, TaskError, TaskSpec};

/// Output root used when `--out` is not given.
pub const OUT_ENV: &str = "BEARS_OUT_DIR";

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_MISSING_TASK: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_HASH: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "bears", version, about = "Reasoning-shortcut-aware neuro-symbolic ensembles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a method on a task and write metrics plus checkpoints.
    Train(TrainArgs),
    /// Enumerate optimal concept maps and write rs.json.
    AnalyzeRs(RsArgs),
    /// Run the active-learning loop and write curve.csv.
    Active(ActiveArgs),
    /// Evaluate a checkpoint without training.
    Eval(EvalArgs),
    /// Generate a task's dataset as CSV.
    GenData(GenArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Hyper {
    /// Builtin task name or path to a task spec JSON file.
    #[arg(long)]
    pub task: String,
    #[arg(long, default_value = "dpl")]
    pub method: Method,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated seeds; overrides --seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub gamma1: Option<f64>,
    #[arg(long)]
    pub gamma2: Option<f64>,
    #[arg(long)]
    pub ensemble_size: Option<usize>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Hyper {
    fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.seeds.clone()
        }
    }

    fn config(&self, spec: &TaskSpec, method: Method, seed: u64) -> EnsembleConfig {
        let mut c = presets::ensemble_config(spec, method, seed);
        if let Some(v) = self.gamma1 {
            c.gamma1 = v;
        }
        if let Some(v) = self.gamma2 {
            c.gamma2 = v;
        }
        if let Some(v) = self.ensemble_size {
            c.ensemble_size = v;
        }
        if let Some(v) = self.mc_samples {
            c.mc_samples = v;
        }
        if let Some(v) = self.epochs {
            c.train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            c.train.batch_size = v;
        }
        if let Some(v) = self.lr {
            c.train.lr = v;
        }
        c
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub hyper: Hyper,
}

#[derive(Args, Debug)]
pub struct RsArgs {
    #[arg(long)]
    pub task: String,
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    pub node_budget: u64,
    /// Output file (default `<out root>/rs-<task>/rs.json`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ActiveArgs {
    #[command(flatten)]
    pub hyper: Hyper,
    #[arg(long, value_delimiter = ',', default_value = "entropy")]
    pub strategy: Vec<Strategy>,
    #[arg(long, default_value_t = 50)]
    pub budget: usize,
    /// Objects revealed per round.
    #[arg(long, default_value_t = 10)]
    pub query_batch: usize,
    /// Retrain from fresh initializations every round.
    #[arg(long)]
    pub cold_start: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Ensemble checkpoint directory.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub task: String,
    #[arg(long, value_delimiter = ',', default_value = "test")]
    pub split: Vec<SplitName>,
    /// Data seed (default: the checkpoint's run seed).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// Output CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub task: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the resolved task spec as JSON.
    #[arg(long)]
    pub spec_out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("task: {0}")]
    Task(#[from] TaskError),
    #[error(transparent)]
    Bears(#[from] BearsError),
    #[error(transparent)]
    Rs(#[from] RsError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Active(#[from] crate::active::ActiveError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("task `{0}` is neither a builtin task nor an existing spec file")]
    MissingTask(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingTask(_) => EXIT_MISSING_TASK,
            CliError::Rs(RsError::Budget { .. }) => EXIT_BUDGET,
            CliError::Bears(BearsError::HashMismatch { .. }) => EXIT_HASH,
            CliError::Active(crate::active::ActiveError::Bears(BearsError::HashMismatch { .. })) => EXIT_HASH,
            _ => EXIT_FAILURE,
        }
    }
}

fn resolve_task(task: &str) -> Result<TaskSpec, CliError> {
    match TaskSpec::resolve(task) {
        Err(TaskError::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => Err(CliError::MissingTask(task.into())),
        r => Ok(r?),
    }
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn out_dir(given: &Option<PathBuf>, default_name: String) -> PathBuf {
    given.clone().unwrap_or_else(|| out_root().join(default_name))
}

/// Short name of a task argument for default output paths.
fn task_label(spec: &TaskSpec) -> String {
    spec.name.replace(|c: char| !c.is_ascii_alphanumeric() && c != '_' && c != '-', "_")
}

#[derive(Serialize)]
struct RunManifest<'a, C: Serialize> {
    command: &'a str,
    crate_version: &'a str,
    task: &'a str,
    task_hash: String,
    seeds: &'a [u64],
    config: C,
}

fn write_manifest<C: Serialize>(
    dir: &Path,
    command: &str,
    spec: &TaskSpec,
    seeds: &[u64],
    config: C,
) -> Result<(), CliError> {
    let m = RunManifest {
        command,
        crate_version: env!("CARGO_PKG_VERSION"),
        task: &spec.name,
        task_hash: spec.content_hash(),
        seeds,
        config,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
    Ok(())
}

fn eval_splits(
    spec: &TaskSpec,
    model: &Ensemble,
    method: &str,
    seed: u64,
    data_seed: u64,
    splits: &[SplitName],
    bins: usize,
) -> Result<Vec<MetricsReport>, CliError> {
    let data = generate_dataset(spec, data_seed)?;
    let k = spec.knowledge_expr()?;
    let ctx = EvalContext {
        method,
        task: &spec.name,
        seed,
        bins,
    };
    let mut out = Vec::new();
    for &s in splits {
        let split = data.split(s);
        if split.is_empty() {
            continue;
        }
        let pred = model.predict(&split.x)?;
        out.push(evaluate(&ctx, &spec.schema, k.label_space(), &pred, split)?);
    }
    Ok(out)
}

fn cmd_train(a: &TrainArgs) -> Result<PathBuf, CliError> {
    let h = &a.hyper;
    let spec = resolve_task(&h.task)?;
    let reasoner = Arc::new(spec.reasoner()?);
    let seeds = h.seeds();
    let dir = out_dir(&h.out, format!("train-{}-{}", task_label(&spec), h.method.as_str()));
    std::fs::create_dir_all(&dir)?;
    let mut reports = Vec::new();
    let mut configs = Vec::new();
    for &seed in &seeds {
        let cfg = h.config(&spec, h.method, seed);
        let data = generate_dataset(&spec, seed)?;
        eprintln!("training {} on {} (seed {seed})", h.method.as_str(), spec.name);
        let model = train_ensemble(&cfg, reasoner.clone(), &data.train.x, &data.train.y, None, None)?;
        model.save(&dir.join(format!("seed_{seed}")), &spec.content_hash())?;
        reports.extend(eval_splits(
            &spec,
            &model,
            h.method.as_str(),
            seed,
            seed,
            &[SplitName::Test, SplitName::Ood],
            h.bins,
        )?);
        configs.push(cfg);
    }
    write_reports(&reports, std::fs::File::create(dir.join("results.csv"))?)?;
    write_manifest(&dir, "train", &spec, &seeds, &configs)?;
    Ok(dir)
}

fn cmd_analyze_rs(a: &RsArgs) -> Result<PathBuf, CliError> {
    let spec = resolve_task(&a.task)?;
    let k = spec.knowledge_expr()?;
    let report = analyze(
        &spec.name,
        &k,
        &spec.support,
        spec.prior.as_deref(),
        spec.rs_codomain,
        a.node_budget,
    )?;
    let path = a
        .out
        .clone()
        .unwrap_or_else(|| out_root().join(format!("rs-{}", task_label(&spec))).join("rs.json"));
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
    println!(
        "{}: {} optimal maps, {} reasoning shortcuts",
        spec.name, report.total_optima, report.rs_count
    );
    Ok(path)
}

fn cmd_active(a: &ActiveArgs) -> Result<PathBuf, CliError> {
    let h = &a.hyper;
    let spec = resolve_task(&h.task)?;
    let reasoner = Arc::new(spec.reasoner()?);
    let seeds = h.seeds();
    let dir = out_dir(&h.out, format!("active-{}-{}", task_label(&spec), h.method.as_str()));
    std::fs::create_dir_all(&dir)?;
    let mut curves = Vec::new();
    let mut configs = Vec::new();
    for &seed in &seeds {
        let data = generate_dataset(&spec, seed)?;
        let cfg = h.config(&spec, h.method, seed);
        for &strategy in &a.strategy {
            let mut ac = presets::active_config(&spec, h.method, strategy);
            ac.budget = a.budget;
            ac.batch = a.query_batch;
            ac.cold_start = a.cold_start;
            eprintln!("active {} / {} (seed {seed})", h.method.as_str(), strategy.as_str());
            let run = active_loop(&ac, &cfg, reasoner.clone(), &data)?;
            curves.push((strategy, seed, run.curve));
            configs.push((ac, cfg.clone()));
        }
    }
    let rows: Vec<CurveRows<'_>> = curves
        .iter()
        .map(|(s, seed, c)| CurveRows {
            strategy: *s,
            method: h.method.as_str(),
            seed: *seed,
            curve: c,
        })
        .collect();
    write_curves(&rows, std::fs::File::create(dir.join("curve.csv"))?)?;
    write_manifest(&dir, "active", &spec, &seeds, &configs)?;
    Ok(dir)
}

fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let spec = resolve_task(&a.task)?;
    let reasoner = Arc::new(spec.reasoner()?);
    let model = Ensemble::load(&a.checkpoint, reasoner, &spec.content_hash())?;
    let seed = model.seeds[0];
    let reports = eval_splits(
        &spec,
        &model,
        model.method.as_str(),
        seed,
        a.seed.unwrap_or(seed),
        &a.split,
        a.bins,
    )?;
    match &a.out {
        Some(p) => write_reports(&reports, std::fs::File::create(p)?)?,
        None => write_reports(&reports, std::io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_gen_data(a: &GenArgs) -> Result<(), CliError> {
    let spec = resolve_task(&a.task)?;
    let data = generate_dataset(&spec, a.seed)?;
    match &a.out {
        Some(p) => data.write_csv(&spec, std::fs::File::create(p)?)?,
        None => data.write_csv(&spec, std::io::stdout().lock())?,
    }
    if let Some(p) = &a.spec_out {
        spec.save(p)?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(a) => {
            let dir = cmd_train(a)?;
            eprintln!("wrote {}", dir.display());
        }
        Command::AnalyzeRs(a) => {
            let p = cmd_analyze_rs(a)?;
            eprintln!("wrote {}", p.display());
        }
        Command::Active(a) => {
            let dir = cmd_active(a)?;
            eprintln!("wrote {}", dir.display());
        }
        Command::Eval(a) => cmd_eval(a)?,
        Command::GenData(a) => cmd_gen_data(a)?,
    }
    Ok(())
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
