use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::{Arch, GnnModel, GraphOps, Mode};
use super::tape::Tape;
use crate::dataset::{mask_indices, Dataset};
use crate::error::{Result, SeaError};
use crate::knn::FeatureMatrix;
use crate::sparse::{SparseMatrix, WeightedGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Overrides the architecture's default dropout rate.
    pub dropout: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 20, learning_rate: 0.005, weight_decay: 5e-4, seed: 0, dropout: None }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(SeaError::Config("epochs must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(SeaError::Config(format!("learning rate {}", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(SeaError::Config(format!("weight decay {}", self.weight_decay)));
        }
        if let Some(p) = self.dropout {
            if !(0.0..1.0).contains(&p) {
                return Err(SeaError::Config(format!("dropout {p} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

pub const ADAM_BETAS: (f64, f64) = (0.9, 0.999);
pub const ADAM_EPS: f64 = 1e-8;

struct Adam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: i32,
}

impl Adam {
    fn new(params: &[Array2<f64>]) -> Self {
        let zeros: Vec<Array2<f64>> = params.iter().map(|p| Array2::zeros(p.raw_dim())).collect();
        Adam { m: zeros.clone(), v: zeros, t: 0 }
    }

    fn step(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>], lr: f64) {
        let (b1, b2) = ADAM_BETAS;
        self.t += 1;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            });
        }
    }
}

/// Per-epoch dropout seed, a fixed function of the run seed.
fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ 0xD1B5_4A32_D192_ED03u64.wrapping_mul(epoch as u64 + 1)
}

/// Initializes a model for `data` from `cfg.seed` and trains it.
pub fn fit(arch: Arch, data: &Dataset, cfg: &TrainConfig) -> Result<(GnnModel, Vec<EpochStats>)> {
    let model = GnnModel::new(arch, data.features.d(), data.num_classes, cfg.seed)?;
    train(&model, data, cfg)
}

/// Full-batch training on the train mask with Adam and an L2 gradient term.
pub fn train(model: &GnnModel, data: &Dataset, cfg: &TrainConfig) -> Result<(GnnModel, Vec<EpochStats>)> {
    cfg.validate()?;
    let rows = data.split.train_indices();
    if rows.is_empty() {
        return Err(SeaError::EmptyMask);
    }
    let val_rows = data.split.val_indices();
    let mut model = model.clone();
    if let Some(p) = cfg.dropout {
        model.dropout = p;
    }
    let ops = GraphOps::new(model.arch, &data.graph);
    let mut adam = Adam::new(&model.params);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mode = Mode::Train { seed: epoch_seed(cfg.seed, epoch) };
        let mut tape = Tape::new();
        let x = tape.constant(data.features.as_array().clone());
        let fwd = model.forward(&mut tape, x, &ops, mode)?;
        let loss_var = tape.cross_entropy(fwd.logits, &rows, &data.labels)?;
        let loss = tape.value(loss_var)[(0, 0)];
        if !loss.is_finite() {
            return Err(SeaError::NonFiniteLoss { epoch, loss });
        }
        let train_accuracy = accuracy_of(tape.value(fwd.logits), &data.labels, &rows);
        let mut grads = tape.backward(loss_var);
        let param_grads: Vec<Array2<f64>> = fwd
            .params
            .iter()
            .zip(&model.params)
            .map(|(v, p)| {
                let g = grads[v.index()].take().unwrap_or_else(|| Array2::zeros(p.raw_dim()));
                g + p * cfg.weight_decay
            })
            .collect();
        adam.step(&mut model.params, &param_grads, cfg.learning_rate);
        if let (Some(stats), Some((mean, var))) = (model.bn.as_mut(), fwd.bn_batch.as_ref()) {
            stats.update(mean, var, data.n());
        }
        let val_accuracy = if val_rows.is_empty() {
            None
        } else {
            let logits = logits_with(&model, &data.features, &ops)?;
            Some(accuracy_of(&logits, &data.labels, &val_rows))
        };
        log::debug!("epoch {epoch}: loss {loss:.6}, train {train_accuracy:.4}");
        trace.push(EpochStats { epoch, loss, train_accuracy, val_accuracy });
    }
    if !model.check_finite() {
        return Err(SeaError::NonFiniteLoss { epoch: cfg.epochs, loss: f64::NAN });
    }
    Ok((model, trace))
}

/// Eval-mode logits over prepared graph operators.
pub fn logits_with(model: &GnnModel, x: &FeatureMatrix, ops: &GraphOps) -> Result<Array2<f64>> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.as_array().clone());
    let fwd = model.forward(&mut tape, xv, ops, Mode::Eval)?;
    Ok(tape.value(fwd.logits).clone())
}

fn forward_logits(model: &GnnModel, arch: Arch, x: &FeatureMatrix, ops: &GraphOps, mode: Mode) -> Result<Array2<f64>> {
    if model.arch != arch {
        return Err(SeaError::ShapeMismatch {
            context: "forward",
            detail: format!("{arch} forward on a {} model", model.arch),
        });
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x.as_array().clone());
    let fwd = model.forward(&mut tape, xv, ops, mode)?;
    Ok(tape.value(fwd.logits).clone())
}

pub fn gcn_forward(model: &GnnModel, x: &FeatureMatrix, a_norm: &SparseMatrix, mode: Mode) -> Result<Array2<f64>> {
    forward_logits(model, Arch::Gcn, x, &GraphOps::Gcn(a_norm.clone()), mode)
}

pub fn gat_forward(model: &GnnModel, x: &FeatureMatrix, g: &WeightedGraph, mode: Mode) -> Result<Array2<f64>> {
    forward_logits(model, Arch::Gat, x, &GraphOps::new(Arch::Gat, g), mode)
}

pub fn sage_forward(model: &GnnModel, x: &FeatureMatrix, g: &WeightedGraph, mode: Mode) -> Result<Array2<f64>> {
    forward_logits(model, Arch::Sage, x, &GraphOps::new(Arch::Sage, g), mode)
}

/// Mean cross-entropy over `rows` and its gradient for every parameter.
pub fn loss_and_gradients(
    model: &GnnModel,
    x: &FeatureMatrix,
    ops: &GraphOps,
    rows: &[usize],
    labels: &[usize],
    mode: Mode,
) -> Result<(f64, Vec<Array2<f64>>)> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.as_array().clone());
    let fwd = model.forward(&mut tape, xv, ops, mode)?;
    let loss = tape.cross_entropy(fwd.logits, rows, labels)?;
    let mut grads = tape.backward(loss);
    let out = fwd
        .params
        .iter()
        .zip(&model.params)
        .map(|(v, p)| grads[v.index()].take().unwrap_or_else(|| Array2::zeros(p.raw_dim())))
        .collect();
    Ok((tape.value(loss)[(0, 0)], out))
}

/// Row-wise argmax; ties go to the smallest class index.
pub fn argmax_rows(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

fn accuracy_of(logits: &Array2<f64>, labels: &[usize], rows: &[usize]) -> f64 {
    let pred = argmax_rows(logits);
    let hits = rows.iter().filter(|&&r| pred[r] == labels[r]).count();
    hits as f64 / rows.len() as f64
}

/// Argmax accuracy of the eval-mode model over the masked nodes.
pub fn evaluate(model: &GnnModel, data: &Dataset, mask: &[bool]) -> Result<f64> {
    evaluate_on(model, data, &data.graph, mask)
}

/// [`evaluate`] with a replacement graph over the same nodes.
pub fn evaluate_on(model: &GnnModel, data: &Dataset, graph: &WeightedGraph, mask: &[bool]) -> Result<f64> {
    if mask.len() != data.n() {
        return Err(SeaError::DimensionMismatch { expected: data.n(), actual: mask.len() });
    }
    let rows = mask_indices(mask);
    if rows.is_empty() {
        return Err(SeaError::EmptyMask);
    }
    let logits = logits_with(model, &data.features, &GraphOps::new(model.arch, graph))?;
    Ok(accuracy_of(&logits, &data.labels, &rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    /// Post-activation output of the first layer.
    #[default]
    Hidden,
    Logits,
}

impl std::str::FromStr for Layer {
    type Err = SeaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hidden" => Ok(Layer::Hidden),
            "logits" => Ok(Layer::Logits),
            other => Err(SeaError::Config(format!("unknown layer {other:?}"))),
        }
    }
}

/// Eval-mode representation of every node.
pub fn extract_embeddings(model: &GnnModel, data: &Dataset, layer: Layer) -> Result<FeatureMatrix> {
    let ops = GraphOps::new(model.arch, &data.graph);
    let mut tape = Tape::new();
    let x = tape.constant(data.features.as_array().clone());
    let fwd = model.forward(&mut tape, x, &ops, Mode::Eval)?;
    let out = match layer {
        Layer::Hidden => fwd.hidden,
        Layer::Logits => fwd.logits,
    };
    FeatureMatrix::new(tape.value(out).clone())
}
