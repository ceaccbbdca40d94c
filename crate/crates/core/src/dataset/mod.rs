//! Labeled graphs: the Cora loader, train/val/test splits, a binary cache
//! and a synthetic Gaussian-blob generator for tests.

mod cache;
mod cora;

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SeaError};
use crate::knn::{build_knn_allowing_duplicates, FeatureMatrix, Metric};
use crate::sparse::WeightedGraph;

pub use cache::{load_cache, save_cache, CACHE_MAGIC, CACHE_VERSION};
pub use cora::{load_cora, load_cora_with_stats, LoadStats};

/// Node-classification dataset over a weighted graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graph: WeightedGraph,
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
    pub class_names: Vec<String>,
}

impl Dataset {
    /// Checks sizes, label range and mask disjointness.
    pub fn new(
        name: impl Into<String>,
        graph: WeightedGraph,
        features: FeatureMatrix,
        labels: Vec<usize>,
        num_classes: usize,
        split: Split,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n = graph.n();
        if features.n() != n {
            return Err(SeaError::DimensionMismatch { expected: n, actual: features.n() });
        }
        if labels.len() != n {
            return Err(SeaError::DimensionMismatch { expected: n, actual: labels.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(SeaError::InvalidSplit(format!("label {bad} outside [0, {num_classes})")));
        }
        split.validate(n)?;
        Ok(Dataset { name: name.into(), graph, features, labels, num_classes, split, class_names })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// Same nodes, features and split on a different graph.
    pub fn with_graph(&self, graph: WeightedGraph) -> Result<Self> {
        if graph.n() != self.n() {
            return Err(SeaError::DimensionMismatch { expected: self.n(), actual: graph.n() });
        }
        Ok(Dataset { graph, ..self.clone() })
    }

    pub fn with_split(mut self, split: Split) -> Result<Self> {
        split.validate(self.n())?;
        self.split = split;
        Ok(self)
    }

    /// Divides every feature row by its sum; all-zero rows are left alone.
    pub fn row_normalized(mut self) -> Self {
        self.features = self.features.row_normalized();
        self
    }
}

/// Boolean train/val/test masks over nodes.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Split {
    pub fn empty(n: usize) -> Self {
        Split { train: vec![false; n], val: vec![false; n], test: vec![false; n] }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for mask in [&self.train, &self.val, &self.test] {
            if mask.len() != n {
                return Err(SeaError::DimensionMismatch { expected: n, actual: mask.len() });
            }
        }
        if let Some(i) = (0..n).find(|&i| self.train[i] as u8 + self.val[i] as u8 + self.test[i] as u8 > 1) {
            return Err(SeaError::InvalidSplit(format!("node {i} is in more than one mask")));
        }
        Ok(())
    }

    pub fn train_indices(&self) -> Vec<usize> {
        mask_indices(&self.train)
    }

    pub fn val_indices(&self) -> Vec<usize> {
        mask_indices(&self.val)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        mask_indices(&self.test)
    }
}

pub fn mask_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SplitStrategy {
    /// First 20 nodes per class train, next 500 val, last 1000 test.
    Planetoid,
    /// Per-class shuffled split with the given train and val fractions.
    Random { train: f64, val: f64 },
}

impl Default for SplitStrategy {
    fn default() -> Self {
        SplitStrategy::Random { train: 0.6, val: 0.2 }
    }
}

impl FromStr for SplitStrategy {
    type Err = SeaError;

    /// `planetoid`, `random` (60/20/20) or `random:TRAIN,VAL`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "planetoid" {
            return Ok(SplitStrategy::Planetoid);
        }
        if s == "random" {
            return Ok(SplitStrategy::default());
        }
        let bad = || SeaError::Config(format!("unknown split {s:?}"));
        let rest = s.strip_prefix("random:").ok_or_else(bad)?;
        let (t, v) = rest.split_once(',').ok_or_else(bad)?;
        let train = t.trim().parse::<f64>().map_err(|_| bad())?;
        let val = v.trim().parse::<f64>().map_err(|_| bad())?;
        Ok(SplitStrategy::Random { train, val })
    }
}

const PLANETOID_PER_CLASS: usize = 20;
const PLANETOID_VAL: usize = 500;
const PLANETOID_TEST: usize = 1000;

pub fn make_split(n: usize, labels: &[usize], strategy: SplitStrategy, seed: u64) -> Result<Split> {
    if labels.len() != n {
        return Err(SeaError::DimensionMismatch { expected: n, actual: labels.len() });
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let mut split = Split::empty(n);
    match strategy {
        SplitStrategy::Planetoid => {
            for (c, nodes) in members.iter().enumerate() {
                if nodes.len() < PLANETOID_PER_CLASS {
                    return Err(SeaError::ClassTooSmall {
                        class: c,
                        available: nodes.len(),
                        needed: PLANETOID_PER_CLASS,
                    });
                }
                for &i in &nodes[..PLANETOID_PER_CLASS] {
                    split.train[i] = true;
                }
            }
            let rest: Vec<usize> = (0..n).filter(|&i| !split.train[i]).collect();
            if rest.len() < PLANETOID_VAL + PLANETOID_TEST {
                return Err(SeaError::InvalidSplit(format!(
                    "planetoid needs {} non-train nodes, have {}",
                    PLANETOID_VAL + PLANETOID_TEST,
                    rest.len()
                )));
            }
            for &i in &rest[..PLANETOID_VAL] {
                split.val[i] = true;
            }
            for &i in &rest[rest.len() - PLANETOID_TEST..] {
                split.test[i] = true;
            }
        }
        SplitStrategy::Random { train, val } => {
            if !(train > 0.0 && val >= 0.0 && train + val < 1.0) {
                return Err(SeaError::InvalidSplit(format!("fractions train={train}, val={val}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (c, nodes) in members.iter().enumerate() {
                if nodes.is_empty() {
                    continue;
                }
                if nodes.len() < 2 {
                    return Err(SeaError::ClassTooSmall { class: c, available: nodes.len(), needed: 2 });
                }
                let mut order = nodes.clone();
                order.shuffle(&mut rng);
                let size = order.len();
                let n_train = ((train * size as f64).round() as usize).clamp(1, size - 1);
                let n_val = ((val * size as f64).round() as usize).min(size - 1 - n_train);
                for &i in &order[..n_train] {
                    split.train[i] = true;
                }
                for &i in &order[n_train..n_train + n_val] {
                    split.val[i] = true;
                }
                for &i in &order[n_train + n_val..] {
                    split.test[i] = true;
                }
            }
        }
    }
    Ok(split)
}

/// Degree of the kNN graph joining synthetic samples.
pub const SYNTHETIC_K: usize = 5;

/// Gaussian blobs: `classes` centers drawn from `N(0, 4 I_d)`, each sample
/// its center plus `N(0, noise^2 I_d)`. Labels are assigned round-robin so
/// class sizes differ by at most one; the graph is the unit-weight
/// `k = 5` kNN graph of the samples. The split is the default random one.
pub fn synthetic_blobs(n: usize, d: usize, classes: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if classes == 0 || n < classes || n <= SYNTHETIC_K || d == 0 {
        return Err(SeaError::InvalidFeatures(format!("n={n}, d={d}, classes={classes}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(SeaError::InvalidFeatures(format!("noise {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    2.0 * z
                })
                .collect()
        })
        .collect();
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|&c| {
            centers[c]
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + noise * z
                })
                .collect()
        })
        .collect();
    let features = FeatureMatrix::from_rows(&rows)?;
    let graph = build_knn_allowing_duplicates(&features, SYNTHETIC_K, Metric::Euclidean)?;
    let split = make_split(n, &labels, SplitStrategy::default(), seed)?;
    let names = (0..classes).map(|c| format!("blob{c}")).collect();
    Dataset::new("synthetic", graph, features, labels, classes, split, names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_strategies() {
        assert_eq!("planetoid".parse::<SplitStrategy>().unwrap(), SplitStrategy::Planetoid);
        assert_eq!("random".parse::<SplitStrategy>().unwrap(), SplitStrategy::Random { train: 0.6, val: 0.2 });
        assert_eq!("random:0.5,0.1".parse::<SplitStrategy>().unwrap(), SplitStrategy::Random { train: 0.5, val: 0.1 });
        assert!("random:0.5".parse::<SplitStrategy>().is_err());
    }

    #[test]
    fn overlapping_masks_rejected() {
        let mut s = Split::empty(3);
        s.train[1] = true;
        s.test[1] = true;
        assert!(s.validate(3).is_err());
    }
}
