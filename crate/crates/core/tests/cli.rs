mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clap::Parser;
use sea_core::attack::{AttackMode, AttackReport, ComparisonRow};
use sea_core::cli::{Cli, Command as Sub, RunConfig};
use sea_core::gnn::Arch;
use serde_json::Value;
use tempfile::{tempdir, TempDir};

struct Env {
    dir: TempDir,
    content: PathBuf,
    cites: PathBuf,
}

impl Env {
    fn new() -> Self {
        let dir = tempdir().unwrap();
        let fx = common::cora_files::write(dir.path(), 150, 30, 17);
        Env { content: fx.content, cites: fx.cites, dir }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("run")
    }

    /// `sea <sub> --content .. --cites .. --out .. --k 10 --s 4 <extra>`
    fn sea(&self, sub: &str, extra: &[&str]) -> Output {
        let mut args: Vec<String> = vec![sub.into()];
        for (flag, value) in [("--content", &self.content), ("--cites", &self.cites), ("--out", &self.out())] {
            args.push(flag.into());
            args.push(value.display().to_string());
        }
        args.extend(["--k", "10", "--s", "4"].map(String::from));
        args.extend(extra.iter().map(|s| s.to_string()));
        run(&args)
    }
}

fn run(args: &[String]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sea")).args(args).env_remove("SEA_THREADS").output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn report(path: &Path) -> AttackReport {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn train_writes_checkpoint_trace_and_metrics() {
    let env = Env::new();
    ok(&env.sea("train", &[]));
    let dir = env.out().join("gcn");
    assert!(dir.join("checkpoint.bin").is_file());
    let trace = fs::read_to_string(dir.join("train_trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("epoch,loss,train_accuracy,val_accuracy"));
    assert_eq!(trace.lines().count(), 21);
    let acc = json(&dir.join("metrics.json"))["original_accuracy"].as_f64().unwrap();
    assert!(acc > 0.0 && acc <= 1.0, "{acc}");
}

#[test]
fn training_is_reproducible() {
    let env = Env::new();
    ok(&env.sea("train", &["--arch", "sage", "--seed", "4"]));
    let dir = env.out().join("sage");
    let metrics = fs::read(dir.join("metrics.json")).unwrap();
    let ckpt = fs::read(dir.join("checkpoint.bin")).unwrap();
    ok(&env.sea("train", &["--arch", "sage", "--seed", "4"]));
    assert_eq!(fs::read(dir.join("metrics.json")).unwrap(), metrics);
    assert_eq!(fs::read(dir.join("checkpoint.bin")).unwrap(), ckpt);
}

#[test]
fn configuration_errors_exit_2() {
    let env = Env::new();
    let missing = env.dir.path().join("nope.content").display().to_string();
    let out = run(&["train".into(), "--content".into(), missing, "--cites".into(), env.cites.display().to_string()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));

    assert_eq!(run(&["train".into()]).status.code(), Some(2));
    assert_eq!(env.sea("attack", &["--fraction", "0", "--train"]).status.code(), Some(2));
    assert_eq!(env.sea("attack", &["--mode", "sideways"]).status.code(), Some(2));
    assert_eq!(env.sea("baseline", &["--trials", "0", "--train"]).status.code(), Some(2));
    // No checkpoint and no --train.
    assert_eq!(env.sea("attack", &[]).status.code(), Some(2));

    let config = env.dir.path().join("bad.conf");
    fs::write(&config, "k = 10\ncolour = blue\n").unwrap();
    let out = env.sea("train", &["--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(env!("CARGO_BIN_EXE_sea"))
        .args(["report", "--out", env.dir.path().to_str().unwrap()])
        .env("SEA_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_3() {
    let env = Env::new();
    let out = run(&["report".into(), "--out".into(), env.dir.path().display().to_string()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing runs"));

    let cites = env.dir.path().join("bad.cites");
    fs::write(&cites, "1000\t1007\t1014\n").unwrap();
    let out = run(&[
        "train".into(),
        "--content".into(),
        env.content.display().to_string(),
        "--cites".into(),
        cites.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

fn resolve(args: &[&str]) -> RunConfig {
    let cli = Cli::try_parse_from(std::iter::once("sea").chain(args.iter().copied())).unwrap();
    match cli.command {
        Sub::Train(a) | Sub::Attack(a) | Sub::Baseline(a) => RunConfig::resolve(&a).unwrap(),
        Sub::Report(_) => unreachable!(),
    }
}

#[test]
fn defaults_follow_the_attack_protocol() {
    let env = Env::new();
    let cfg = resolve(&["attack", "--content", env.content.to_str().unwrap(), "--cites", env.cites.to_str().unwrap()]);
    assert_eq!((cfg.sea.k, cfg.sea.s), (50, 20));
    assert_eq!(cfg.sea.fraction, 0.1);
    assert_eq!(cfg.sea.multiplier, 2.0);
    assert_eq!(cfg.sea.mode, AttackMode::Evasion);
    assert_eq!(cfg.trials, 10);
    assert_eq!(cfg.arch, Arch::Gcn);
    assert_eq!(cfg.sea.train.epochs, 20);
}

#[test]
fn flags_override_config_file() {
    let env = Env::new();
    let config = env.dir.path().join("run.conf");
    fs::write(
        &config,
        format!(
            "# experiment\ncontent = {}\ncites = {}\nk = 7\ns = 3 # few\nmode = poisoning\narch = gat\nrow-normalize = true\n",
            env.content.display(),
            env.cites.display()
        ),
    )
    .unwrap();
    let cfg = resolve(&["attack", "--config", config.to_str().unwrap(), "--k", "9"]);
    assert_eq!(cfg.sea.k, 9);
    assert_eq!(cfg.sea.s, 3);
    assert_eq!(cfg.sea.mode, AttackMode::Poisoning);
    assert_eq!(cfg.arch, Arch::Gat);
    assert!(cfg.row_normalize);
    assert_eq!(cfg.checkpoint, PathBuf::from("runs/gat/checkpoint.bin"));
}

#[test]
fn attack_writes_consistent_report_and_scores() {
    let env = Env::new();
    ok(&env.sea("attack", &["--train"]));
    let dir = env.out().join("gcn");
    let r = report(&dir.join("sea_report.json"));
    assert!(r.is_consistent());
    assert_eq!(r.dataset, "cora");
    let scores = fs::read_to_string(dir.join("edge_scores.csv")).unwrap();
    let edges = scores.lines().count() - 1;
    assert_eq!(r.edges_attacked, (0.1 * edges as f64).ceil() as usize);
    let values: Vec<f64> = scores.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[0] >= w[1]));
    let metrics = json(&dir.join("metrics.json"));
    assert_eq!(metrics["original_accuracy"].as_f64().unwrap(), r.original_accuracy);
}

#[test]
fn baseline_writes_trials_and_summary() {
    let env = Env::new();
    ok(&env.sea("baseline", &["--train", "--trials", "3"]));
    let dir = env.out().join("gcn");
    let files: Vec<String> = {
        let mut v: Vec<String> = fs::read_dir(dir.join("baseline"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        v.sort();
        v
    };
    assert_eq!(files, ["trial_00.json", "trial_01.json", "trial_02.json"]);
    let summary = report(&dir.join("baseline_summary.json"));
    let mean =
        (0..3).map(|t| report(&dir.join(format!("baseline/trial_{t:02}.json"))).degradation_pp).sum::<f64>() / 3.0;
    assert!((summary.degradation_pp - mean).abs() < 1e-12);

    // A single trial: the summary is that trial.
    ok(&env.sea("baseline", &["--trials", "1"]));
    let one = report(&dir.join("baseline/trial_00.json"));
    let summary = report(&dir.join("baseline_summary.json"));
    assert!(!dir.join("baseline/trial_01.json").exists());
    assert_eq!(summary.attacked_accuracy, one.attacked_accuracy);
    assert_eq!(summary.degradation_pp, one.degradation_pp);
    assert_eq!(summary.trials, Some(1));
}

fn comparison(out: &Path) -> Vec<ComparisonRow> {
    csv::Reader::from_path(out.join("comparison.csv")).unwrap().deserialize().map(|r| r.unwrap()).collect()
}

fn sea_report(out: &Path) -> Output {
    run(&["report".into(), "--out".into(), out.display().to_string()])
}

#[test]
fn report_tables_follow_available_runs() {
    let env = Env::new();
    let out = env.out();
    ok(&env.sea("attack", &["--train"]));
    // Attack without baseline: nothing comparable yet.
    assert_eq!(sea_report(&out).status.code(), Some(3));
    ok(&env.sea("baseline", &["--trials", "2"]));
    ok(&sea_report(&out));
    let rows = comparison(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].arch, Arch::Gcn);

    for arch in ["gat", "sage"] {
        ok(&env.sea("attack", &["--train", "--arch", arch]));
        ok(&env.sea("baseline", &["--trials", "2", "--arch", arch]));
    }
    ok(&sea_report(&out));
    let rows = comparison(&out);
    assert_eq!(rows.iter().map(|r| r.arch).collect::<Vec<_>>(), Arch::ALL);

    // Re-parse oracle: every CSV value traces back to the JSON sources.
    for row in &rows {
        let dir = out.join(row.arch.to_string());
        let sea = report(&dir.join("sea_report.json"));
        let random = report(&dir.join("baseline_summary.json"));
        assert!((row.original - 100.0 * sea.original_accuracy).abs() < 1e-9);
        assert!((row.sea_drop - sea.degradation_pp).abs() < 1e-9);
        assert!((row.random_drop_mean - random.degradation_pp).abs() < 1e-9);
    }
    let from_json: Vec<ComparisonRow> =
        serde_json::from_str(&fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    assert_eq!(from_json, rows);
    let plot = fs::read_to_string(out.join("plot_data.csv")).unwrap();
    assert_eq!(plot.lines().next(), Some("arch,method,degradation_pp"));
    assert_eq!(plot.lines().count(), 7);
}
