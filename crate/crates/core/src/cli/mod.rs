//! The `sea` command line.
//!
//! Every option can come from a flat `key = value` config file (`#` starts
//! a comment, keys are the long flag names with `-` or `_`); flags given on
//! the command line win. A run directory holds one subdirectory per
//! architecture:
//!
//! ```text
//! <out>/<arch>/checkpoint.bin        sea train
//! <out>/<arch>/train_trace.csv
//! <out>/<arch>/metrics.json
//! <out>/<arch>/sea_report.json       sea attack
//! <out>/<arch>/edge_scores.csv
//! <out>/<arch>/baseline/trial_NN.json  sea baseline
//! <out>/<arch>/baseline_summary.json
//! <out>/comparison.csv               sea report
//! <out>/comparison.json
//! <out>/plot_data.csv
//! ```
//!
//! Exit status is 2 for configuration errors and 3 for runtime failures.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use log::warn;
use serde::Serialize;

use crate::attack::{compare, write_comparison_csv, write_plot_csv, AttackMode, AttackReport, Attacker, SeaConfig};
use crate::dataset::{load_cora, make_split, Dataset, SplitStrategy};
use crate::error::SeaError;
use crate::gnn::{evaluate, load_checkpoint, save_checkpoint, train, Arch, GnnModel, Layer, TrainConfig};
use crate::knn::Metric;
use crate::spectral::write_scores_csv;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "SEA_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sea", version, about = "Spectral edge attack on graph neural networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on the clean graph and record its accuracy.
    Train(RunArgs),
    /// Score every edge spectrally and reweight the top fraction.
    Attack(RunArgs),
    /// Reweight uniformly sampled edges over several trials.
    Baseline(RunArgs),
    /// Collect attack and baseline results into comparison tables.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Flat key = value file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory containing cora.content and cora.cites.
    #[arg(long)]
    pub cora_dir: Option<PathBuf>,
    #[arg(long)]
    pub content: Option<PathBuf>,
    #[arg(long)]
    pub cites: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// gcn, gat or sage.
    #[arg(long)]
    pub arch: Option<Arch>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// planetoid, random or random:TRAIN,VAL.
    #[arg(long)]
    pub split: Option<SplitStrategy>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Divide feature rows by their sums.
    #[arg(long)]
    pub row_normalize: Option<bool>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub multiplier: Option<f64>,
    /// evasion or poisoning.
    #[arg(long)]
    pub mode: Option<AttackMode>,
    /// hidden or logits.
    #[arg(long)]
    pub layer: Option<Layer>,
    /// euclidean or cosine.
    #[arg(long)]
    pub metric: Option<Metric>,
    #[arg(long)]
    pub normalized: Option<bool>,
    /// Residual tolerance of the pencil solver, relative to ||L_X||_F.
    #[arg(long)]
    pub eig_tol: Option<f64>,
    #[arg(long)]
    pub cg_tol: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Checkpoint to attack; defaults to <out>/<arch>/checkpoint.bin.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Train and save a checkpoint when none exists.
    #[arg(long)]
    pub train: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Run directory written by attack and baseline.
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(SeaError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<SeaError> for CliError {
    fn from(e: SeaError) -> Self {
        match e {
            SeaError::Config(msg) => CliError::Config(msg),
            SeaError::InvalidFraction(_) | SeaError::InvalidSplit(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Fully resolved options of a train/attack/baseline run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub content: PathBuf,
    pub cites: PathBuf,
    pub out: PathBuf,
    pub arch: Arch,
    pub split: SplitStrategy,
    pub row_normalize: bool,
    pub sea: SeaConfig,
    pub trials: usize,
    pub checkpoint: PathBuf,
    pub train_if_missing: bool,
}

const KEYS: &[&str] = &[
    "cora_dir",
    "content",
    "cites",
    "out",
    "arch",
    "seed",
    "split",
    "epochs",
    "lr",
    "weight_decay",
    "dropout",
    "row_normalize",
    "k",
    "s",
    "fraction",
    "multiplier",
    "mode",
    "layer",
    "metric",
    "normalized",
    "eig_tol",
    "cg_tol",
    "trials",
    "checkpoint",
    "train",
];

/// Parses `key = value` lines.
pub fn parse_config(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key = value", i + 1)))?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!("config line {}: unknown key {key:?}", i + 1)));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

struct Layered {
    file: BTreeMap<String, String>,
}

impl Layered {
    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| CliError::Config(format!("{key} = {v:?}: {e}"))),
        }
    }
}

impl RunConfig {
    pub fn resolve(args: &RunArgs) -> CliResult<Self> {
        let file = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        let c = Layered { file };
        let a = args.clone();

        let cora_dir: Option<PathBuf> = c.get(a.cora_dir, "cora_dir")?;
        let content = c.get(a.content, "content")?.or_else(|| cora_dir.as_ref().map(|d| d.join("cora.content")));
        let cites = c.get(a.cites, "cites")?.or_else(|| cora_dir.as_ref().map(|d| d.join("cora.cites")));
        let (Some(content), Some(cites)) = (content, cites) else {
            return Err(CliError::Config("no dataset: pass --cora-dir or both --content and --cites".into()));
        };
        for path in [&content, &cites] {
            if !path.is_file() {
                return Err(CliError::Config(format!("dataset file {} does not exist", path.display())));
            }
        }
        let out: PathBuf = c.get(a.out, "out")?.unwrap_or_else(|| PathBuf::from("runs"));
        let arch: Arch = c.get(a.arch, "arch")?.unwrap_or(Arch::Gcn);
        let split: SplitStrategy = c.get(a.split, "split")?.unwrap_or_default();

        let defaults = SeaConfig::default();
        let train = TrainConfig {
            epochs: c.get(a.epochs, "epochs")?.unwrap_or(defaults.train.epochs),
            learning_rate: c.get(a.lr, "lr")?.unwrap_or(defaults.train.learning_rate),
            weight_decay: c.get(a.weight_decay, "weight_decay")?.unwrap_or(defaults.train.weight_decay),
            seed: c.get(a.seed, "seed")?.unwrap_or(defaults.train.seed),
            dropout: c.get(a.dropout, "dropout")?,
        };
        let mut eigen = defaults.eigen;
        eigen.tol = c.get(a.eig_tol, "eig_tol")?.unwrap_or(eigen.tol);
        eigen.cg.tol = c.get(a.cg_tol, "cg_tol")?.unwrap_or(eigen.cg.tol);
        let sea = SeaConfig {
            k: c.get(a.k, "k")?.unwrap_or(defaults.k),
            s: c.get(a.s, "s")?.unwrap_or(defaults.s),
            fraction: c.get(a.fraction, "fraction")?.unwrap_or(defaults.fraction),
            multiplier: c.get(a.multiplier, "multiplier")?.unwrap_or(defaults.multiplier),
            mode: c.get(a.mode, "mode")?.unwrap_or_default(),
            layer: c.get(a.layer, "layer")?.unwrap_or_default(),
            metric: c.get(a.metric, "metric")?.unwrap_or_default(),
            normalized: c.get(a.normalized, "normalized")?.unwrap_or(defaults.normalized),
            eigen,
            train,
        };
        sea.validate()?;
        let trials = c.get(a.trials, "trials")?.unwrap_or(10);
        if trials == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        let checkpoint =
            c.get(a.checkpoint, "checkpoint")?.unwrap_or_else(|| out.join(arch.to_string()).join("checkpoint.bin"));
        let train_if_missing = a.train || c.get(None, "train")?.unwrap_or(false);
        Ok(RunConfig {
            content,
            cites,
            out,
            arch,
            split,
            row_normalize: c.get(a.row_normalize, "row_normalize")?.unwrap_or(false),
            sea,
            trials,
            checkpoint,
            train_if_missing,
        })
    }

    pub fn arch_dir(&self) -> PathBuf {
        self.out.join(self.arch.to_string())
    }

    /// Loads the dataset and draws the split from the run seed.
    pub fn dataset(&self) -> CliResult<Dataset> {
        let data = load_cora(&self.content, &self.cites)?;
        let split = make_split(data.n(), &data.labels, self.split, self.sea.train.seed)?;
        let data = data.with_split(split)?;
        Ok(if self.row_normalize { data.row_normalized() } else { data })
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("{e}");
        return e.exit_code();
    }
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let threads: usize =
        value.trim().parse().map_err(|_| CliError::Config(format!("{THREADS_ENV}={value:?} is not a thread count")))?;
    // A pool that is already initialized (library use) is left as is.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

pub fn execute(command: &Command) -> CliResult<()> {
    match command {
        Command::Train(args) => cmd_train(&RunConfig::resolve(args)?),
        Command::Attack(args) => cmd_attack(&RunConfig::resolve(args)?),
        Command::Baseline(args) => cmd_baseline(&RunConfig::resolve(args)?),
        Command::Report(args) => cmd_report(&args.out).map(|_| ()),
    }
}

#[derive(Debug, Serialize)]
struct Metrics<'a> {
    dataset: &'a str,
    arch: Arch,
    seed: u64,
    epochs: usize,
    final_loss: f64,
    train_accuracy: f64,
    val_accuracy: Option<f64>,
    original_accuracy: f64,
}

pub fn cmd_train(cfg: &RunConfig) -> CliResult<()> {
    let data = cfg.dataset()?;
    train_and_save(cfg, &data)?;
    Ok(())
}

fn train_and_save(cfg: &RunConfig, data: &Dataset) -> CliResult<GnnModel> {
    let dir = cfg.arch_dir();
    create_dir(&dir)?;
    let init = GnnModel::new(cfg.arch, data.features.d(), data.num_classes, cfg.sea.train.seed)?;
    let (model, trace) = train(&init, data, &cfg.sea.train)?;
    let accuracy = evaluate(&model, data, &data.split.test)?;

    let trace_path = dir.join("train_trace.csv");
    let mut w = csv::Writer::from_path(&trace_path).map_err(SeaError::from)?;
    for row in &trace {
        w.serialize(row).map_err(SeaError::from)?;
    }
    w.flush().map_err(|e| SeaError::io(&trace_path, e))?;

    let last = trace.last().expect("epochs >= 1");
    let metrics = Metrics {
        dataset: &data.name,
        arch: cfg.arch,
        seed: cfg.sea.train.seed,
        epochs: cfg.sea.train.epochs,
        final_loss: last.loss,
        train_accuracy: last.train_accuracy,
        val_accuracy: last.val_accuracy,
        original_accuracy: accuracy,
    };
    write_json(&dir.join("metrics.json"), &metrics)?;
    save_checkpoint(&model, &cfg.checkpoint)?;
    log::info!("{}: test accuracy {accuracy:.4}", cfg.arch);
    Ok(model)
}

fn model_for(cfg: &RunConfig, data: &Dataset) -> CliResult<GnnModel> {
    if !cfg.checkpoint.is_file() {
        if cfg.train_if_missing {
            return train_and_save(cfg, data);
        }
        return Err(CliError::Config(format!(
            "no checkpoint at {}; run `sea train` first or pass --train",
            cfg.checkpoint.display()
        )));
    }
    let model = load_checkpoint(&cfg.checkpoint)?;
    if model.arch != cfg.arch || model.input_dim != data.features.d() || model.classes != data.num_classes {
        return Err(CliError::Config(format!(
            "checkpoint {} holds a {} model for {} features and {} classes",
            cfg.checkpoint.display(),
            model.arch,
            model.input_dim,
            model.classes
        )));
    }
    Ok(model)
}

pub fn cmd_attack(cfg: &RunConfig) -> CliResult<()> {
    let data = cfg.dataset()?;
    let model = model_for(cfg, &data)?;
    let attacker = Attacker::new(&data, cfg.sea)?;
    let outcome = attacker.sea(&model)?;
    let dir = cfg.arch_dir();
    create_dir(&dir)?;
    write_json(&dir.join("sea_report.json"), &outcome.report)?;
    let path = dir.join("edge_scores.csv");
    let file = fs::File::create(&path).map_err(|e| SeaError::io(&path, e))?;
    write_scores_csv(BufWriter::new(file), &outcome.scores).map_err(|e| SeaError::io(&path, e))?;
    Ok(())
}

pub fn cmd_baseline(cfg: &RunConfig) -> CliResult<()> {
    let data = cfg.dataset()?;
    let model = model_for(cfg, &data)?;
    let attacker = Attacker::new(&data, cfg.sea)?;
    let outcome = attacker.random(&model, cfg.trials)?;
    let dir = cfg.arch_dir();
    let trial_dir = dir.join("baseline");
    if trial_dir.exists() {
        fs::remove_dir_all(&trial_dir).map_err(|e| SeaError::io(&trial_dir, e))?;
    }
    create_dir(&trial_dir)?;
    for r in &outcome.trials {
        let t = r.trial.expect("baseline trial index");
        write_json(&trial_dir.join(format!("trial_{t:02}.json")), r)?;
    }
    write_json(&dir.join("baseline_summary.json"), &outcome.summary)?;
    Ok(())
}

/// Builds one comparison row per architecture that has both a SEA report
/// and a baseline summary under `out`, and writes the tables.
pub fn cmd_report(out: &Path) -> CliResult<Vec<crate::attack::ComparisonRow>> {
    let mut rows = Vec::new();
    for arch in Arch::ALL {
        let dir = out.join(arch.to_string());
        let (sea, random) = (dir.join("sea_report.json"), dir.join("baseline_summary.json"));
        match (sea.is_file(), random.is_file()) {
            (true, true) => {
                let sea: AttackReport = read_json(&sea)?;
                let random: AttackReport = read_json(&random)?;
                rows.push(compare(&sea, &random)?);
            }
            (false, false) => warn!("no {arch} results in {}", out.display()),
            (true, false) => warn!("{arch}: attack report without baseline summary; skipped"),
            (false, true) => warn!("{arch}: baseline summary without attack report; skipped"),
        }
    }
    if rows.is_empty() {
        return Err(SeaError::MissingRuns(format!(
            "no architecture in {} has both attack and baseline results",
            out.display()
        ))
        .into());
    }
    let csv_path = out.join("comparison.csv");
    let file = fs::File::create(&csv_path).map_err(|e| SeaError::io(&csv_path, e))?;
    write_comparison_csv(file, &rows)?;
    write_json(&out.join("comparison.json"), &rows)?;
    let plot_path = out.join("plot_data.csv");
    let file = fs::File::create(&plot_path).map_err(|e| SeaError::io(&plot_path, e))?;
    write_plot_csv(file, &rows)?;
    Ok(rows)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| SeaError::io(dir, e).into())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(SeaError::from)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| SeaError::io(path, e).into())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| SeaError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| SeaError::from(e).into())
}
