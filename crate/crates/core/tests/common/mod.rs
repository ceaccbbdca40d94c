#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sea_core::knn::FeatureMatrix;
use sea_core::sparse::WeightedGraph;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random spanning tree plus `extra` random chords, weights in [0.5, 2).
pub fn random_connected_graph(n: usize, extra: usize, weighted: bool, rng: &mut ChaCha8Rng) -> WeightedGraph {
    let mut triples = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        triples.push((u, v, weight(weighted, rng)));
    }
    let mut added = 0;
    while added < extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            triples.push((a, b, weight(weighted, rng)));
            added += 1;
        }
    }
    WeightedGraph::new(n, triples).unwrap()
}

fn weight(weighted: bool, rng: &mut ChaCha8Rng) -> f64 {
    if weighted {
        rng.random_range(0.5..2.0)
    } else {
        1.0
    }
}

pub fn random_features(n: usize, d: usize, rng: &mut ChaCha8Rng) -> FeatureMatrix {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect();
    FeatureMatrix::from_rows(&rows).unwrap()
}

pub fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

pub fn random_permutation(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub mod gradients {
    use super::{random_connected_graph, random_features, rng};
    use sea_core::gnn::{loss_and_gradients, Arch, GnnModel, GraphOps, Mode};
    use sea_core::knn::FeatureMatrix;
    use sea_core::sparse::WeightedGraph;

    pub const STEP: f64 = 1e-5;

    /// Fixed 12-node weighted graph, 5 features, 3 classes, 8 training rows.
    pub fn fixture() -> (WeightedGraph, FeatureMatrix, Vec<usize>, Vec<usize>) {
        let mut r = rng(2024);
        let g = random_connected_graph(12, 10, true, &mut r);
        let x = random_features(12, 5, &mut r);
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let rows = vec![0, 1, 2, 4, 5, 7, 9, 11];
        (g, x, labels, rows)
    }

    /// Worst relative error between analytic and central-difference
    /// gradients, per parameter tensor: `max_i |a_i - n_i| / max(||a||_inf, ||n||_inf)`.
    pub fn check(arch: Arch, mode: Mode) -> Vec<(&'static str, f64)> {
        let (g, x, labels, rows) = fixture();
        let model = GnnModel::new(arch, 5, 3, 7).unwrap();
        let ops = GraphOps::new(arch, &g);
        let (_, analytic) = loss_and_gradients(&model, &x, &ops, &rows, &labels, mode).unwrap();
        let loss_at = |m: &GnnModel| loss_and_gradients(m, &x, &ops, &rows, &labels, mode).unwrap().0;
        let mut out = Vec::new();
        for (t, name) in arch.param_names().iter().enumerate() {
            let mut worst_diff: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for idx in 0..model.params[t].len() {
                let mut plus = model.clone();
                let mut minus = model.clone();
                plus.params[t].as_slice_mut().unwrap()[idx] += STEP;
                minus.params[t].as_slice_mut().unwrap()[idx] -= STEP;
                let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * STEP);
                let a = analytic[t].as_slice().unwrap()[idx];
                worst_diff = worst_diff.max((a - numeric).abs());
                scale = scale.max(a.abs()).max(numeric.abs());
            }
            out.push((*name, if scale > 0.0 { worst_diff / scale } else { worst_diff }));
        }
        out
    }
}

/// Small Cora-format text files: binary bag-of-words rows whose active
/// words depend on the class, and citations mostly within a class.
pub mod cora_files {
    use std::fmt::Write as _;
    use std::path::{Path, PathBuf};

    use rand::Rng;

    pub const CLASS_NAMES: [&str; 3] = ["Theory", "Neural_Networks", "Genetic_Algorithms"];

    pub struct Fixture {
        pub content: PathBuf,
        pub cites: PathBuf,
        pub n: usize,
        pub d: usize,
    }

    pub fn write(dir: &Path, n: usize, d: usize, seed: u64) -> Fixture {
        let mut r = super::rng(seed);
        let mut content = String::new();
        let classes = CLASS_NAMES.len();
        let label = |i: usize| i % classes;
        for i in 0..n {
            let c = label(i);
            write!(content, "{}", 1000 + 7 * i).unwrap();
            for j in 0..d {
                let home = j % classes == c;
                let on = r.random::<f64>() < if home { 0.5 } else { 0.05 };
                write!(content, "\t{}", on as u8).unwrap();
            }
            writeln!(content, "\t{}", CLASS_NAMES[c]).unwrap();
        }
        let mut cites = String::new();
        for i in 0..n {
            for _ in 0..2 {
                let j = if r.random::<f64>() < 0.9 {
                    (label(i) + classes * r.random_range(0..n / classes)) % n
                } else {
                    r.random_range(0..n)
                };
                writeln!(cites, "{}\t{}", 1000 + 7 * j, 1000 + 7 * i).unwrap();
            }
        }
        let content_path = dir.join("fixture.content");
        let cites_path = dir.join("fixture.cites");
        std::fs::write(&content_path, content).unwrap();
        std::fs::write(&cites_path, cites).unwrap();
        Fixture { content: content_path, cites: cites_path, n, d }
    }
}
