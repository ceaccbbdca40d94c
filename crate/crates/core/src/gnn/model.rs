use std::fmt;
use std::str::FromStr;

use log::warn;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Neighborhoods, Tape, Var};
use crate::error::{Result, SeaError};
use crate::sparse::{SparseMatrix, WeightedGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Gat,
    Sage,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Gcn, Arch::Gat, Arch::Sage];

    /// Hidden width per head and head count of the first layer.
    pub fn hidden_layout(self) -> (usize, usize) {
        match self {
            Arch::Gcn => (64, 1),
            Arch::Gat => (8, 4),
            Arch::Sage => (32, 1),
        }
    }

    pub fn default_dropout(self) -> f64 {
        match self {
            Arch::Gat => 0.2,
            Arch::Gcn | Arch::Sage => 0.0,
        }
    }

    /// Ordered parameter names.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Arch::Gcn => &["w1", "b1", "w2", "b2"],
            Arch::Gat => &["w1", "att_self1", "att_nbr1", "b1", "w2", "att_self2", "att_nbr2", "b2"],
            Arch::Sage => &["w_self1", "w_nbr1", "b1", "bn_gamma", "bn_beta", "w_self2", "w_nbr2", "b2"],
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Gcn => "gcn",
            Arch::Gat => "gat",
            Arch::Sage => "sage",
        })
    }
}

impl FromStr for Arch {
    type Err = SeaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gcn" => Ok(Arch::Gcn),
            "gat" => Ok(Arch::Gat),
            "sage" | "graphsage" => Ok(Arch::Sage),
            other => Err(SeaError::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Forward-pass mode. Training draws dropout masks from `seed` and uses
/// batch statistics for normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train { seed: u64 },
    Eval,
}

/// Running mean and variance of the GraphSAGE batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
    pub momentum: f64,
}

impl BatchNormStats {
    pub fn new(width: usize) -> Self {
        BatchNormStats { mean: Array1::zeros(width), var: Array1::ones(width), momentum: 0.1 }
    }

    /// Folds in one batch; `var` is the biased batch variance over `n` rows
    /// and is stored unbiased.
    pub fn update(&mut self, mean: &Array1<f64>, var: &Array1<f64>, n: usize) {
        let m = self.momentum;
        let unbias = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
        self.mean = &self.mean * (1.0 - m) + mean * m;
        self.var = &self.var * (1.0 - m) + var * (m * unbias);
    }
}

/// Parameters and layout of one of the three architectures.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    pub arch: Arch,
    pub input_dim: usize,
    pub classes: usize,
    pub dropout: f64,
    pub params: Vec<Array2<f64>>,
    pub bn: Option<BatchNormStats>,
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

impl GnnModel {
    /// Glorot-uniform weights and attention vectors, zero biases, unit
    /// batch-norm scale. Dropout is the architecture default.
    pub fn new(arch: Arch, input_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || classes == 0 {
            return Err(SeaError::ShapeMismatch {
                context: "model",
                detail: format!("input_dim={input_dim}, classes={classes}"),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, heads) = arch.hidden_layout();
        let h = f * heads;
        let d = input_dim;
        let c = classes;
        let zeros = |cols| Array2::zeros((1, cols));
        let params = match arch {
            Arch::Gcn => vec![glorot(d, h, &mut rng), zeros(h), glorot(h, c, &mut rng), zeros(c)],
            Arch::Gat => vec![
                glorot(d, h, &mut rng),
                glorot(1, h, &mut rng),
                glorot(1, h, &mut rng),
                zeros(h),
                glorot(h, c, &mut rng),
                glorot(1, c, &mut rng),
                glorot(1, c, &mut rng),
                zeros(c),
            ],
            Arch::Sage => vec![
                glorot(d, h, &mut rng),
                glorot(d, h, &mut rng),
                zeros(h),
                Array2::ones((1, h)),
                zeros(h),
                glorot(h, c, &mut rng),
                glorot(h, c, &mut rng),
                zeros(c),
            ],
        };
        let bn = (arch == Arch::Sage).then(|| BatchNormStats::new(h));
        Ok(GnnModel { arch, input_dim, classes, dropout: arch.default_dropout(), params, bn })
    }

    /// Width of the hidden representation returned by embedding extraction.
    pub fn hidden_dim(&self) -> usize {
        let (f, heads) = self.arch.hidden_layout();
        f * heads
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Array2::len).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Array2<f64>> {
        self.arch.param_names().iter().position(|&n| n == name).map(|i| &self.params[i])
    }

    pub fn check_finite(&self) -> bool {
        self.params.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

/// Graph operators an architecture consumes, built once per graph.
#[derive(Debug, Clone)]
pub enum GraphOps {
    /// `D^-1/2 (A + I) D^-1/2`.
    Gcn(SparseMatrix),
    /// Neighborhoods with self entries of weight 1.
    Gat(Neighborhoods),
    /// Row-stochastic weighted-mean operator without self loops.
    Sage(SparseMatrix),
}

impl GraphOps {
    pub fn new(arch: Arch, g: &WeightedGraph) -> Self {
        match arch {
            Arch::Gcn => GraphOps::Gcn(normalize_adjacency(g)),
            Arch::Gat => GraphOps::Gat(attention_neighborhoods(g)),
            Arch::Sage => GraphOps::Sage(mean_aggregator(g)),
        }
    }

    pub fn arch(&self) -> Arch {
        match self {
            GraphOps::Gcn(_) => Arch::Gcn,
            GraphOps::Gat(_) => Arch::Gat,
            GraphOps::Sage(_) => Arch::Sage,
        }
    }
}

/// `D~^-1/2 (A_w + I) D~^-1/2` with unit self loops and weighted degrees.
pub fn normalize_adjacency(g: &WeightedGraph) -> SparseMatrix {
    let n = g.n();
    let deg: Vec<f64> = g.degrees().iter().map(|d| d + 1.0).collect();
    let inv: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut triplets = Vec::with_capacity(n + 2 * g.num_edges());
    for (i, &s) in inv.iter().enumerate() {
        triplets.push((i, i, s * s));
    }
    for e in g.edges() {
        let v = e.w * inv[e.p] * inv[e.q];
        triplets.push((e.p, e.q, v));
        triplets.push((e.q, e.p, v));
    }
    SparseMatrix::from_triplets(n, triplets, true).expect("indices come from a valid graph")
}

pub fn attention_neighborhoods(g: &WeightedGraph) -> Neighborhoods {
    let adj = g.adjacency();
    let mut offsets = Vec::with_capacity(g.n() + 1);
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    offsets.push(0);
    for (p, list) in adj.iter().enumerate() {
        let mut row: Vec<(usize, f64)> = list.clone();
        row.push((p, 1.0));
        row.sort_by_key(|&(q, _)| q);
        for (q, w) in row {
            cols.push(q);
            weights.push(w);
        }
        offsets.push(cols.len());
    }
    Neighborhoods { offsets, cols, weights }
}

/// `M(p,q) = w(p,q) / sum_r w(p,r)`; isolated nodes get an empty row, so
/// their aggregate is zero.
pub fn mean_aggregator(g: &WeightedGraph) -> SparseMatrix {
    let degrees = g.degrees();
    let isolated = degrees.iter().filter(|&&d| d == 0.0).count();
    if isolated > 0 {
        warn!("{isolated} isolated nodes aggregate to the zero vector");
    }
    let mut triplets = Vec::with_capacity(2 * g.num_edges());
    for e in g.edges() {
        triplets.push((e.p, e.q, e.w / degrees[e.p]));
        triplets.push((e.q, e.p, e.w / degrees[e.q]));
    }
    SparseMatrix::from_triplets(g.n(), triplets, false).expect("indices come from a valid graph")
}

/// Tape handles produced by one forward pass.
pub struct Forward {
    pub logits: Var,
    pub hidden: Var,
    pub params: Vec<Var>,
    /// Batch mean and biased variance seen by batch norm in train mode.
    pub bn_batch: Option<(Array1<f64>, Array1<f64>)>,
}

fn dropout_mask(shape: (usize, usize), p: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let scale = 1.0 / (1.0 - p);
    Array2::from_shape_fn(shape, |_| if rng.random::<f64>() < p { 0.0 } else { scale })
}

fn dropout<'g>(tape: &mut Tape<'g>, x: Var, p: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
    match rng {
        Some(rng) if p > 0.0 => {
            let mask = dropout_mask(tape.value(x).dim(), p, rng);
            tape.mask(x, mask)
        }
        _ => Ok(x),
    }
}

impl GnnModel {
    /// Records the forward pass for `x` on `tape`.
    pub fn forward<'g>(&self, tape: &mut Tape<'g>, x: Var, ops: &'g GraphOps, mode: Mode) -> Result<Forward> {
        if ops.arch() != self.arch {
            return Err(SeaError::ShapeMismatch {
                context: "forward",
                detail: format!("model is {}, graph operators are {}", self.arch, ops.arch()),
            });
        }
        let (rows, cols) = tape.value(x).dim();
        if cols != self.input_dim {
            return Err(SeaError::ShapeMismatch {
                context: "forward",
                detail: format!("features have {cols} columns, model expects {}", self.input_dim),
            });
        }
        let n_ops = match ops {
            GraphOps::Gcn(m) | GraphOps::Sage(m) => m.n(),
            GraphOps::Gat(nb) => nb.n(),
        };
        if n_ops != rows {
            return Err(SeaError::DimensionMismatch { expected: n_ops, actual: rows });
        }
        let params: Vec<Var> = self.params.iter().map(|p| tape.param(p.clone())).collect();
        let mut rng = match mode {
            Mode::Train { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            Mode::Eval => None,
        };
        let p = self.dropout;
        let mut bn_batch = None;
        let (hidden, logits) = match ops {
            GraphOps::Gcn(a) => {
                let h_in = dropout(tape, x, p, rng.as_mut())?;
                let xw = tape.matmul(h_in, params[0])?;
                let ax = tape.spmm(a, xw)?;
                let pre = tape.add_bias(ax, params[1])?;
                let hidden = tape.relu(pre);
                let h2 = dropout(tape, hidden, p, rng.as_mut())?;
                let hw = tape.matmul(h2, params[2])?;
                let ah = tape.spmm(a, hw)?;
                (hidden, tape.add_bias(ah, params[3])?)
            }
            GraphOps::Gat(nb) => {
                let (_, heads) = self.arch.hidden_layout();
                let h_in = dropout(tape, x, p, rng.as_mut())?;
                let z1 = tape.matmul(h_in, params[0])?;
                let keep1 = attention_dropout(nb.nnz() * heads, p, rng.as_mut());
                let agg1 = tape.gat(z1, params[1], params[2], heads, nb, keep1)?;
                let pre = tape.add_bias(agg1, params[3])?;
                let hidden = tape.elu(pre);
                let h2 = dropout(tape, hidden, p, rng.as_mut())?;
                let z2 = tape.matmul(h2, params[4])?;
                let keep2 = attention_dropout(nb.nnz(), p, rng.as_mut());
                let agg2 = tape.gat(z2, params[5], params[6], 1, nb, keep2)?;
                (hidden, tape.add_bias(agg2, params[7])?)
            }
            GraphOps::Sage(m) => {
                let h_in = dropout(tape, x, p, rng.as_mut())?;
                let self1 = tape.matmul(h_in, params[0])?;
                let agg = tape.spmm(m, h_in)?;
                let nbr1 = tape.matmul(agg, params[1])?;
                let sum = tape.add(self1, nbr1)?;
                let pre = tape.add_bias(sum, params[2])?;
                let act = tape.relu(pre);
                let stats = self.bn.as_ref().ok_or_else(|| SeaError::ShapeMismatch {
                    context: "forward",
                    detail: "GraphSAGE model without batch-norm statistics".into(),
                })?;
                let running = match mode {
                    Mode::Train { .. } => None,
                    Mode::Eval => Some((&stats.mean, &stats.var)),
                };
                let (hidden, mean, var) = tape.batch_norm(act, params[3], params[4], running)?;
                if running.is_none() {
                    bn_batch = Some((mean, var));
                }
                let h2 = dropout(tape, hidden, p, rng.as_mut())?;
                let self2 = tape.matmul(h2, params[5])?;
                let agg2 = tape.spmm(m, h2)?;
                let nbr2 = tape.matmul(agg2, params[6])?;
                let sum2 = tape.add(self2, nbr2)?;
                (hidden, tape.add_bias(sum2, params[7])?)
            }
        };
        Ok(Forward { logits, hidden, params, bn_batch })
    }
}

fn attention_dropout(len: usize, p: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Vec<f64>> {
    match rng {
        Some(rng) if p > 0.0 => {
            let scale = 1.0 / (1.0 - p);
            Some((0..len).map(|_| if rng.random::<f64>() < p { 0.0 } else { scale }).collect())
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolated_node_adjacency_is_one() {
        let a = normalize_adjacency(&WeightedGraph::empty(1));
        assert_eq!(a.get(0, 0), 1.0);
    }

    #[test]
    fn unit_edge_adjacency_is_half() {
        let a = normalize_adjacency(&WeightedGraph::unweighted(2, [(0, 1)]).unwrap());
        for r in 0..2 {
            for c in 0..2 {
                assert!((a.get(r, c) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn shapes_follow_layout() {
        let m = GnnModel::new(Arch::Gat, 10, 3, 0).unwrap();
        assert_eq!(m.param("w1").unwrap().dim(), (10, 32));
        assert_eq!(m.param("att_self2").unwrap().dim(), (1, 3));
        let s = GnnModel::new(Arch::Sage, 10, 3, 0).unwrap();
        assert_eq!(s.hidden_dim(), 32);
        assert_eq!(s.bn.as_ref().unwrap().mean.len(), 32);
        assert_eq!("graphsage".parse::<Arch>().unwrap(), Arch::Sage);
    }
}
