use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SeaError};

/// Undirected weighted edge, stored with `p < q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub p: usize,
    pub q: usize,
    pub w: f64,
}

impl Edge {
    pub fn pair(&self) -> (usize, usize) {
        (self.p, self.q)
    }
}

/// Simple undirected graph with strictly positive edge weights.
///
/// Edges are kept sorted by `(p, q)` with `p < q`, which makes the edge list
/// a canonical form: two graphs are equal iff their edge lists are equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
}

impl WeightedGraph {
    /// Builds a graph from `(p, q, w)` triples in either orientation.
    ///
    /// Duplicate pairs are merged by summing their weights. Self-loops,
    /// non-positive or non-finite weights and out-of-range ids are rejected.
    pub fn new(n: usize, triples: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (a, b, w) in triples {
            if a >= n || b >= n {
                return Err(SeaError::NodeOutOfRange { node: a.max(b), n });
            }
            if a == b {
                return Err(SeaError::InvalidGraph(format!("self-loop on node {a}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(SeaError::InvalidGraph(format!(
                    "edge ({a},{b}) has non-positive or non-finite weight {w}"
                )));
            }
            *merged.entry((a.min(b), a.max(b))).or_insert(0.0) += w;
        }
        let edges = merged.into_iter().map(|((p, q), w)| Edge { p, q, w }).collect();
        Ok(WeightedGraph { n, edges })
    }

    /// Unit-weight graph from unordered pairs.
    pub fn unweighted(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::new(n, pairs.into_iter().map(|(p, q)| (p, q, 1.0)))
    }

    pub fn empty(n: usize) -> Self {
        WeightedGraph { n, edges: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Sorted `(p, q)` pairs.
    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(Edge::pair).collect()
    }

    /// Position of the edge `{p, q}` in [`edges`](Self::edges).
    pub fn edge_index(&self, p: usize, q: usize) -> Option<usize> {
        let key = (p.min(q), p.max(q));
        self.edges.binary_search_by(|e| e.pair().cmp(&key)).ok()
    }

    pub fn weight(&self, p: usize, q: usize) -> Option<f64> {
        self.edge_index(p, q).map(|i| self.edges[i].w)
    }

    /// Weighted degree of every node.
    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for e in &self.edges {
            d[e.p] += e.w;
            d[e.q] += e.w;
        }
        d
    }

    /// Neighbor lists `(neighbor, weight)` sorted by neighbor id.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.p].push((e.q, e.w));
            adj[e.q].push((e.p, e.w));
        }
        for list in &mut adj {
            list.sort_by_key(|&(v, _)| v);
        }
        adj
    }

    /// Copy of the graph with the weight of each listed edge multiplied by
    /// `multiplier`. Listed pairs must already be edges.
    pub fn reweighted(&self, targets: &[(usize, usize)], multiplier: f64) -> Result<Self> {
        if !(multiplier.is_finite() && multiplier > 0.0) {
            return Err(SeaError::InvalidGraph(format!("multiplier must be positive, got {multiplier}")));
        }
        let mut edges = self.edges.clone();
        for &(p, q) in targets {
            let idx = self
                .edge_index(p, q)
                .ok_or_else(|| SeaError::InvalidGraph(format!("({p},{q}) is not an edge of the graph")))?;
            edges[idx].w *= multiplier;
        }
        Ok(WeightedGraph { n: self.n, edges })
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(SeaError::DimensionMismatch { expected: self.n, actual: perm.len() });
        }
        Self::new(self.n, self.edges.iter().map(|e| (perm[e.p], perm[e.q], e.w)))
    }
}
