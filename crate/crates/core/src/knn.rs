//! Exact kNN manifold graphs over dense feature rows.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SeaError};
use crate::sparse::WeightedGraph;

/// Row-major `n x d` matrix of finite features, `n >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Array2<f64>);

impl FeatureMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(SeaError::InvalidFeatures(format!("need at least 2 rows, got {}", data.nrows())));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let d = data.ncols().max(1);
            return Err(SeaError::InvalidFeatures(format!("non-finite entry at row {}, column {}", pos / d, pos % d)));
        }
        Ok(FeatureMatrix(data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(SeaError::InvalidFeatures("rows have different lengths".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data =
            Array2::from_shape_vec((rows.len(), d), flat).map_err(|e| SeaError::InvalidFeatures(e.to_string()))?;
        Self::new(data)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn d(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// Rows reordered so that row `i` moves to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = Array2::zeros(self.0.raw_dim());
        for (i, &target) in perm.iter().enumerate() {
            out.row_mut(target).assign(&self.0.row(i));
        }
        FeatureMatrix(out)
    }

    /// Each row scaled to sum to one; all-zero rows are left untouched.
    pub fn row_normalized(&self) -> Self {
        let mut out = self.0.clone();
        for mut row in out.rows_mut() {
            let s: f64 = row.sum();
            if s != 0.0 {
                row.mapv_inplace(|v| v / s);
            }
        }
        FeatureMatrix(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = SeaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(SeaError::Config(format!("unknown metric {other:?}"))),
        }
    }
}

/// Edge weighting of the symmetrized kNN graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeWeighting {
    #[default]
    Unit,
    /// `exp(-d^2 / sigma^2)` with `sigma` the mean kNN distance.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnOptions {
    pub k: usize,
    pub metric: Metric,
    pub weighting: EdgeWeighting,
}

impl KnnOptions {
    pub fn new(k: usize) -> Self {
        KnnOptions { k, metric: Metric::Euclidean, weighting: EdgeWeighting::Unit }
    }
}

/// Union-symmetrized kNN graph with unit weights.
pub fn build_knn(f: &FeatureMatrix, k: usize, metric: Metric) -> Result<WeightedGraph> {
    build_knn_with(f, &KnnOptions { k, metric, weighting: EdgeWeighting::Unit })
}

pub fn build_knn_with(f: &FeatureMatrix, opts: &KnnOptions) -> Result<WeightedGraph> {
    let picks = knn_lists(f, opts.k, opts.metric)?;
    symmetrize(f.n(), &picks, opts)
}

/// Same graph as [`build_knn`] but duplicate rows are accepted; ties at
/// distance zero resolve by node id like any other tie.
pub(crate) fn build_knn_allowing_duplicates(f: &FeatureMatrix, k: usize, metric: Metric) -> Result<WeightedGraph> {
    check_k(k, f.n())?;
    let picks = search(f, k, metric);
    symmetrize(f.n(), &picks, &KnnOptions { k, metric, weighting: EdgeWeighting::Unit })
}

fn symmetrize(n: usize, picks: &[Vec<(usize, f64)>], opts: &KnnOptions) -> Result<WeightedGraph> {
    let mut triples: Vec<(usize, usize, f64)> = Vec::with_capacity(n * opts.k);
    let mut seen = HashSet::with_capacity(n * opts.k);
    let sigma = match opts.weighting {
        EdgeWeighting::Unit => 1.0,
        EdgeWeighting::Gaussian => {
            let total: f64 = picks.iter().flatten().map(|&(_, d)| d).sum();
            let mean = total / (n * opts.k) as f64;
            if mean > 0.0 {
                mean
            } else {
                1.0
            }
        }
    };
    for (p, list) in picks.iter().enumerate() {
        for &(q, dist) in list {
            let key = (p.min(q), p.max(q));
            if !seen.insert(key) {
                continue;
            }
            let w = match opts.weighting {
                EdgeWeighting::Unit => 1.0,
                EdgeWeighting::Gaussian => (-(dist * dist) / (sigma * sigma)).exp().max(f64::MIN_POSITIVE),
            };
            triples.push((key.0, key.1, w));
        }
    }
    WeightedGraph::new(n, triples)
}

/// Directed neighbor lists: for every row, its `k` nearest other rows as
/// `(id, distance)` sorted by `(distance, id)`.
pub fn knn_lists(f: &FeatureMatrix, k: usize, metric: Metric) -> Result<Vec<Vec<(usize, f64)>>> {
    let n = f.n();
    check_k(k, n)?;
    let distinct = count_distinct_rows(f);
    if distinct < n && k > distinct - 1 {
        return Err(SeaError::DegenerateFeatures { k, distinct });
    }
    Ok(search(f, k, metric))
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(SeaError::InvalidK { k, n });
    }
    Ok(())
}

fn search(f: &FeatureMatrix, k: usize, metric: Metric) -> Vec<Vec<(usize, f64)>> {
    let n = f.n();
    let rows = RowStore::new(f);
    (0..n)
        .into_par_iter()
        .map(|p| {
            let mut cand: Vec<(f64, usize)> =
                (0..n).filter(|&q| q != p).map(|q| (rows.ranking_distance(p, q, metric), q)).collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, cmp);
                cand.truncate(k);
            }
            cand.sort_by(cmp);
            cand.into_iter()
                .map(|(d, q)| {
                    let d = match metric {
                        Metric::Euclidean => d.sqrt(),
                        Metric::Cosine => d,
                    };
                    (q, d)
                })
                .collect()
        })
        .collect()
}

fn count_distinct_rows(f: &FeatureMatrix) -> usize {
    let set: HashSet<Vec<u64>> = f
        .as_array()
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| if *v == 0.0 { 0 } else { v.to_bits() }).collect())
        .collect();
    set.len()
}

/// Rows held sparsely when the matrix is mostly zeros. Both layouts visit
/// the nonzero terms in column order, so they give bitwise equal distances.
enum RowStore<'a> {
    Dense { data: ArrayView2<'a, f64>, norms: Vec<f64> },
    Sparse { rows: Vec<Vec<(usize, f64)>>, norms: Vec<f64> },
}

impl<'a> RowStore<'a> {
    fn new(f: &'a FeatureMatrix) -> Self {
        let data = f.view();
        let norms: Vec<f64> = data.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        let nnz = data.iter().filter(|v| **v != 0.0).count();
        if (nnz as f64) < 0.1 * data.len() as f64 {
            let rows = data
                .rows()
                .into_iter()
                .map(|r| r.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect())
                .collect();
            RowStore::Sparse { rows, norms }
        } else {
            RowStore::Dense { data, norms }
        }
    }

    /// Squared euclidean distance, or cosine distance.
    fn ranking_distance(&self, p: usize, q: usize, metric: Metric) -> f64 {
        match metric {
            Metric::Euclidean => self.squared_distance(p, q),
            Metric::Cosine => {
                let norms = match self {
                    RowStore::Dense { norms, .. } | RowStore::Sparse { norms, .. } => norms,
                };
                let denom = norms[p] * norms[q];
                if denom == 0.0 {
                    1.0
                } else {
                    1.0 - self.dot(p, q) / denom
                }
            }
        }
    }

    fn squared_distance(&self, p: usize, q: usize) -> f64 {
        match self {
            RowStore::Dense { data, .. } => {
                data.row(p).iter().zip(data.row(q).iter()).map(|(a, b)| (a - b) * (a - b)).sum()
            }
            RowStore::Sparse { rows, .. } => {
                let (a, b) = (&rows[p], &rows[q]);
                let (mut i, mut j, mut acc) = (0, 0, 0.0);
                while i < a.len() || j < b.len() {
                    let ca = a.get(i).map_or(usize::MAX, |x| x.0);
                    let cb = b.get(j).map_or(usize::MAX, |x| x.0);
                    let diff = if ca == cb {
                        let d = a[i].1 - b[j].1;
                        i += 1;
                        j += 1;
                        d
                    } else if ca < cb {
                        i += 1;
                        a[i - 1].1
                    } else {
                        j += 1;
                        -b[j - 1].1
                    };
                    acc += diff * diff;
                }
                acc
            }
        }
    }

    fn dot(&self, p: usize, q: usize) -> f64 {
        match self {
            RowStore::Dense { data, .. } => data.row(p).iter().zip(data.row(q).iter()).map(|(a, b)| a * b).sum(),
            RowStore::Sparse { rows, .. } => {
                let (a, b) = (&rows[p], &rows[q]);
                let (mut i, mut j, mut acc) = (0, 0, 0.0);
                while i < a.len() && j < b.len() {
                    match a[i].0.cmp(&b[j].0) {
                        std::cmp::Ordering::Equal => {
                            acc += a[i].1 * b[j].1;
                            i += 1;
                            j += 1;
                        }
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                    }
                }
                acc
            }
        }
    }
}

/// Component label per node, numbered by first appearance.
pub fn connected_components(g: &WeightedGraph) -> Vec<usize> {
    let adj = g.adjacency();
    let mut labels = vec![usize::MAX; g.n()];
    let mut next = 0;
    let mut queue = std::collections::VecDeque::new();
    for start in 0..g.n() {
        if labels[start] != usize::MAX {
            continue;
        }
        labels[start] = next;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if labels[v] == usize::MAX {
                    labels[v] = next;
                    queue.push_back(v);
                }
            }
        }
        next += 1;
    }
    labels
}

pub fn component_count(labels: &[usize]) -> usize {
    labels.iter().copied().max().map_or(0, |m| m + 1)
}
