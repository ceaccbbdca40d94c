//! End-to-end attack: train, embed, score dataset edges through the
//! Laplacian pencil of the input and latent kNN graphs, reweight the top
//! fraction and measure the accuracy drop. Also the random-reweighting
//! baseline and the comparison tables built from both.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::OnceLock;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Result, SeaError};
use crate::gnn::{evaluate, evaluate_on, extract_embeddings, fit, Arch, GnnModel, Layer, TrainConfig};
use crate::knn::{build_knn, Metric};
use crate::sparse::WeightedGraph;
use crate::spectral::{budget, rank_and_select, score_edges, EdgeScore, EigenOptions, LaplacianPencil};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMode {
    /// The trained model is fixed; only inference sees the perturbed graph.
    #[default]
    Evasion,
    /// The model is retrained from the same seed on the perturbed graph.
    Poisoning,
}

impl fmt::Display for AttackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackMode::Evasion => "evasion",
            AttackMode::Poisoning => "poisoning",
        })
    }
}

impl FromStr for AttackMode {
    type Err = SeaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "evasion" => Ok(AttackMode::Evasion),
            "poisoning" => Ok(AttackMode::Poisoning),
            other => Err(SeaError::Config(format!("unknown attack mode {other:?}"))),
        }
    }
}

/// Edges to reweight and by how much.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackPlan {
    pub target_edges: Vec<(usize, usize)>,
    pub weight_multiplier: f64,
    pub mode: AttackMode,
}

impl AttackPlan {
    /// Targets must be distinct edges of `graph`, given in either orientation.
    pub fn new(graph: &WeightedGraph, targets: Vec<(usize, usize)>, multiplier: f64, mode: AttackMode) -> Result<Self> {
        if !(multiplier > 0.0 && multiplier.is_finite()) {
            return Err(SeaError::Config(format!("weight multiplier {multiplier} must be positive")));
        }
        let mut seen = std::collections::HashSet::with_capacity(targets.len());
        for &(p, q) in &targets {
            if graph.edge_index(p, q).is_none() {
                return Err(SeaError::InvalidGraph(format!("target ({p}, {q}) is not an edge")));
            }
            if !seen.insert((p.min(q), p.max(q))) {
                return Err(SeaError::InvalidGraph(format!("target ({p}, {q}) listed twice")));
            }
        }
        Ok(AttackPlan { target_edges: targets, weight_multiplier: multiplier, mode })
    }

    /// Reweighted copy of `graph`, checked to keep its edge set.
    pub fn apply(&self, graph: &WeightedGraph) -> Result<WeightedGraph> {
        let out = graph.reweighted(&self.target_edges, self.weight_multiplier)?;
        let expected = if self.weight_multiplier == 1.0 { 0 } else { self.target_edges.len() };
        check_topology(graph, &out, expected)?;
        Ok(out)
    }
}

/// Same sorted edge list on both sides and exactly `changed` weights differ.
pub fn check_topology(before: &WeightedGraph, after: &WeightedGraph, changed: usize) -> Result<()> {
    if before.n() != after.n() {
        return Err(SeaError::TopologyViolation(format!("node count {} -> {}", before.n(), after.n())));
    }
    if before.edge_pairs() != after.edge_pairs() {
        return Err(SeaError::TopologyViolation(format!(
            "edge set changed ({} -> {} edges)",
            before.num_edges(),
            after.num_edges()
        )));
    }
    let actual = before.edges().iter().zip(after.edges()).filter(|(a, b)| a.w != b.w).count();
    if actual != changed {
        return Err(SeaError::TopologyViolation(format!("{actual} weights changed, expected {changed}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeaConfig {
    /// Neighbors per node in both kNN graphs.
    pub k: usize,
    /// Pencil eigenpairs in the embedding.
    pub s: usize,
    pub fraction: f64,
    pub multiplier: f64,
    pub mode: AttackMode,
    pub metric: Metric,
    pub layer: Layer,
    /// Use normalized instead of combinatorial Laplacians.
    pub normalized: bool,
    pub eigen: EigenOptions,
    pub train: TrainConfig,
}

impl Default for SeaConfig {
    fn default() -> Self {
        SeaConfig {
            k: 50,
            s: 20,
            fraction: 0.1,
            multiplier: 2.0,
            mode: AttackMode::Evasion,
            metric: Metric::Euclidean,
            layer: Layer::Hidden,
            normalized: false,
            eigen: EigenOptions::default(),
            train: TrainConfig::default(),
        }
    }
}

impl SeaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(SeaError::Config("k must be positive".into()));
        }
        if self.s == 0 {
            return Err(SeaError::Config("s must be positive".into()));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(SeaError::InvalidFraction(self.fraction));
        }
        if !(self.multiplier > 0.0 && self.multiplier.is_finite()) {
            return Err(SeaError::Config(format!("weight multiplier {} must be positive", self.multiplier)));
        }
        self.train.validate()
    }
}

/// One attack outcome. Accuracies are test-mask fractions, degradation is
/// in percentage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub dataset: String,
    pub arch: Arch,
    pub mode: AttackMode,
    pub seed: u64,
    pub fraction: f64,
    pub multiplier: f64,
    pub edges_attacked: usize,
    pub original_accuracy: f64,
    pub attacked_accuracy: f64,
    pub degradation_pp: f64,
    /// Number of reports averaged into this one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Baseline trial index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<usize>,
}

impl AttackReport {
    /// `|degradation - 100 (original - attacked)| <= 1e-9`.
    pub fn is_consistent(&self) -> bool {
        (self.degradation_pp - degradation(self.original_accuracy, self.attacked_accuracy)).abs() <= 1e-9
    }
}

pub fn degradation(original: f64, attacked: f64) -> f64 {
    (original - attacked) * 100.0
}

/// Field-wise mean of reports from the same configuration; `trials` is set
/// to their count and `seed` is the first report's.
pub fn mean_report(reports: &[AttackReport]) -> Result<AttackReport> {
    let first = reports.first().ok_or_else(|| SeaError::MissingRuns("no reports to average".into()))?;
    for r in reports {
        same_setting(first, r)?;
    }
    let m = reports.len() as f64;
    // Equal inputs average to themselves exactly, so a baseline summary keeps
    // the clean accuracy bit for bit.
    let mean = |f: fn(&AttackReport) -> f64| {
        let x0 = f(&reports[0]);
        if reports.iter().all(|r| f(r) == x0) {
            x0
        } else {
            reports.iter().map(f).sum::<f64>() / m
        }
    };
    Ok(AttackReport {
        original_accuracy: mean(|r| r.original_accuracy),
        attacked_accuracy: mean(|r| r.attacked_accuracy),
        degradation_pp: mean(|r| r.degradation_pp),
        trials: Some(reports.len()),
        trial: None,
        ..first.clone()
    })
}

fn same_setting(a: &AttackReport, b: &AttackReport) -> Result<()> {
    let mismatch = |what: &str, x: String, y: String| Err(SeaError::ConfigMismatch(format!("{what}: {x} vs {y}")));
    if a.dataset != b.dataset {
        return mismatch("dataset", a.dataset.clone(), b.dataset.clone());
    }
    if a.arch != b.arch {
        return mismatch("arch", a.arch.to_string(), b.arch.to_string());
    }
    if a.mode != b.mode {
        return mismatch("mode", a.mode.to_string(), b.mode.to_string());
    }
    if a.fraction != b.fraction {
        return mismatch("fraction", a.fraction.to_string(), b.fraction.to_string());
    }
    if a.multiplier != b.multiplier {
        return mismatch("multiplier", a.multiplier.to_string(), b.multiplier.to_string());
    }
    if a.edges_attacked != b.edges_attacked {
        return mismatch("edges_attacked", a.edges_attacked.to_string(), b.edges_attacked.to_string());
    }
    Ok(())
}

/// Everything a SEA run produced besides the report.
#[derive(Debug, Clone)]
pub struct SeaOutcome {
    pub report: AttackReport,
    /// Scores of every dataset edge, in edge order.
    pub scores: Vec<EdgeScore>,
    /// The attacked edges, highest score first.
    pub selected: Vec<EdgeScore>,
    pub eigenvalues: Vec<f64>,
    pub attacked_graph: WeightedGraph,
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub trials: Vec<AttackReport>,
    pub summary: AttackReport,
}

/// A dataset with its input-space kNN graph, built on first use and shared
/// by every model and seed attacked through it.
pub struct Attacker<'a> {
    data: &'a Dataset,
    cfg: SeaConfig,
    input_graph: OnceLock<WeightedGraph>,
}

impl<'a> Attacker<'a> {
    pub fn new(data: &'a Dataset, cfg: SeaConfig) -> Result<Self> {
        cfg.validate()?;
        if data.graph.num_edges() == 0 {
            return Err(SeaError::EmptyEdgeSet);
        }
        Ok(Attacker { data, cfg, input_graph: OnceLock::new() })
    }

    pub fn config(&self) -> &SeaConfig {
        &self.cfg
    }

    /// Same dataset and input graph under another configuration. `k` and
    /// `metric` must match, since the input graph depends on them.
    pub fn with_config(&self, cfg: SeaConfig) -> Result<Attacker<'a>> {
        cfg.validate()?;
        if cfg.k != self.cfg.k || cfg.metric != self.cfg.metric {
            return Err(SeaError::ConfigMismatch("k and metric fix the input graph".into()));
        }
        Ok(Attacker { data: self.data, cfg, input_graph: self.input_graph.clone() })
    }

    /// kNN graph of the raw features.
    pub fn input_graph(&self) -> Result<&WeightedGraph> {
        if let Some(g) = self.input_graph.get() {
            return Ok(g);
        }
        let g = build_knn(&self.data.features, self.cfg.k, self.cfg.metric)?;
        Ok(self.input_graph.get_or_init(|| g))
    }

    /// Model trained on the clean graph with the configured seed.
    pub fn train(&self, arch: Arch) -> Result<GnnModel> {
        fit(arch, self.data, &self.cfg.train).map(|(m, _)| m)
    }

    /// Scores every dataset edge for `model` without attacking.
    pub fn score(&self, model: &GnnModel) -> Result<(Vec<EdgeScore>, Vec<f64>)> {
        let cfg = &self.cfg;
        let latent = extract_embeddings(model, self.data, cfg.layer)?;
        let output_graph = build_knn(&latent, cfg.k, cfg.metric)?;
        let pencil = LaplacianPencil::from_graphs(self.input_graph()?, &output_graph, cfg.normalized)?;
        let emb = pencil.embed(cfg.s, &cfg.eigen)?;
        let scores = score_edges(&emb, &self.data.graph.edge_pairs())?;
        Ok((scores, emb.eigenvalues().to_vec()))
    }

    /// Attacks the top-scoring edges for a model trained on the clean graph.
    pub fn sea(&self, model: &GnnModel) -> Result<SeaOutcome> {
        let original = self.clean_accuracy(model)?;
        let (scores, eigenvalues) = self.score(model)?;
        let selected = rank_and_select(&scores, self.cfg.fraction)?;
        let targets = selected.iter().map(EdgeScore::pair).collect();
        let (report, attacked_graph) = self.attack(model, original, targets, None)?;
        info!("sea {}: {:.4} -> {:.4}", model.arch, report.original_accuracy, report.attacked_accuracy);
        Ok(SeaOutcome { report, scores, selected, eigenvalues, attacked_graph })
    }

    /// `trials` uniform draws of the same number of edges; trial `t` samples
    /// with seed `train.seed + t`.
    pub fn random(&self, model: &GnnModel, trials: usize) -> Result<BaselineOutcome> {
        if trials == 0 {
            return Err(SeaError::Config("trials must be at least 1".into()));
        }
        let original = self.clean_accuracy(model)?;
        let edges = self.data.graph.edge_pairs();
        let count = budget(self.cfg.fraction, edges.len())?;
        let reports = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.train.seed.wrapping_add(t as u64));
                let mut picks = rand::seq::index::sample(&mut rng, edges.len(), count).into_vec();
                picks.sort_unstable();
                let targets = picks.into_iter().map(|i| edges[i]).collect();
                self.attack(model, original, targets, Some(t)).map(|(r, _)| r)
            })
            .collect::<Result<Vec<_>>>()?;
        let summary = mean_report(&reports)?;
        Ok(BaselineOutcome { trials: reports, summary })
    }

    fn clean_accuracy(&self, model: &GnnModel) -> Result<f64> {
        evaluate(model, self.data, &self.data.split.test)
    }

    fn attack(
        &self,
        model: &GnnModel,
        original: f64,
        targets: Vec<(usize, usize)>,
        trial: Option<usize>,
    ) -> Result<(AttackReport, WeightedGraph)> {
        let cfg = &self.cfg;
        let plan = AttackPlan::new(&self.data.graph, targets, cfg.multiplier, cfg.mode)?;
        let attacked_graph = plan.apply(&self.data.graph)?;
        let attacked = match cfg.mode {
            AttackMode::Evasion => evaluate_on(model, self.data, &attacked_graph, &self.data.split.test)?,
            AttackMode::Poisoning => {
                let perturbed = self.data.with_graph(attacked_graph.clone())?;
                let (retrained, _) = fit(model.arch, &perturbed, &cfg.train)?;
                evaluate(&retrained, &perturbed, &perturbed.split.test)?
            }
        };
        let report = AttackReport {
            dataset: self.data.name.clone(),
            arch: model.arch,
            mode: cfg.mode,
            seed: cfg.train.seed,
            fraction: cfg.fraction,
            multiplier: cfg.multiplier,
            edges_attacked: plan.target_edges.len(),
            original_accuracy: original,
            attacked_accuracy: attacked,
            degradation_pp: degradation(original, attacked),
            trials: None,
            trial,
        };
        Ok((report, attacked_graph))
    }
}

/// Trains `arch` on the clean graph and runs the spectral attack.
pub fn run_sea(data: &Dataset, arch: Arch, cfg: &SeaConfig) -> Result<SeaOutcome> {
    let attacker = Attacker::new(data, *cfg)?;
    let model = attacker.train(arch)?;
    attacker.sea(&model)
}

/// Trains `arch` on the clean graph and runs the random baseline.
pub fn run_random_baseline(data: &Dataset, arch: Arch, cfg: &SeaConfig, trials: usize) -> Result<BaselineOutcome> {
    let attacker = Attacker::new(data, *cfg)?;
    let model = attacker.train(arch)?;
    attacker.random(&model, trials)
}

/// One row of the method comparison, all values in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub arch: Arch,
    pub original: f64,
    pub sea_drop: f64,
    pub random_drop_mean: f64,
}

/// Pairs a SEA report with the baseline summary from the same setting.
pub fn compare(sea: &AttackReport, random: &AttackReport) -> Result<ComparisonRow> {
    same_setting(sea, random)?;
    if sea.original_accuracy != random.original_accuracy {
        return Err(SeaError::ConfigMismatch(format!(
            "original accuracy {} vs {}",
            sea.original_accuracy, random.original_accuracy
        )));
    }
    Ok(ComparisonRow {
        arch: sea.arch,
        original: sea.original_accuracy * 100.0,
        sea_drop: sea.degradation_pp,
        random_drop_mean: random.degradation_pp,
    })
}

/// `arch,original,sea_drop,random_drop_mean`
pub fn write_comparison_csv<W: Write>(out: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| SeaError::io("comparison csv", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub arch: Arch,
    pub method: String,
    pub degradation_pp: f64,
}

/// Long format `arch,method,degradation_pp` with methods `sea` and `random`.
pub fn plot_rows(rows: &[ComparisonRow]) -> Vec<PlotRow> {
    rows.iter()
        .flat_map(|r| {
            [
                PlotRow { arch: r.arch, method: "sea".into(), degradation_pp: r.sea_drop },
                PlotRow { arch: r.arch, method: "random".into(), degradation_pp: r.random_drop_mean },
            ]
        })
        .collect()
}

pub fn write_plot_csv<W: Write>(out: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in plot_rows(rows) {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| SeaError::io("plot csv", e))?;
    Ok(())
}
