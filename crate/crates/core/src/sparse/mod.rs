//! Sparse symmetric operators, graph Laplacians and the solvers built on them.
//!
//! [`SparseMatrix`] is a plain CSR container. Laplacians are assembled from a
//! [`WeightedGraph`]; pseudoinverse actions go through [`cg_solve`] with an
//! explicit [`DeflationBasis`]; [`dense_generalized_eig`] is the exact dense
//! reference used to check the iterative paths.

mod cg;
mod dense;
mod graph;

pub(crate) use cg::cg_best_effort;
pub use cg::{cg_solve, CgOptions, DeflationBasis};
pub use dense::{dense_generalized_eig, DenseEigenpair, ORACLE_MAX_N};
pub use graph::{Edge, WeightedGraph};

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};

use crate::error::{Result, SeaError};

/// Square sparse matrix in compressed row form.
///
/// Column indices are sorted within each row and no explicit zeros are
/// stored. `symmetric` is a promise made by the constructor that built the
/// matrix; [`SparseMatrix::check_symmetric`] verifies it.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    /// Assembles an `n x n` matrix from triplets, summing duplicates and
    /// dropping entries that end up exactly zero.
    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
        symmetric: bool,
    ) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, c, v) in triplets {
            if r >= n || c >= n {
                return Err(SeaError::NodeOutOfRange { node: r.max(c), n });
            }
            rows[r].push((c, v));
        }
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut v = 0.0;
                while i < row.len() && row[i].0 == c {
                    v += row[i].1;
                    i += 1;
                }
                if v != 0.0 {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix { n, row_offsets, col_indices, values, symmetric })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        match self.col_indices[span.clone()].binary_search(&c) {
            Ok(i) => self.values[span.start + i],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn transpose(&self) -> Self {
        let triplets = (0..self.n).flat_map(|r| self.row(r).map(move |(c, v)| (c, r, v)));
        // Entries were nonzero already, so nothing is dropped.
        SparseMatrix::from_triplets(self.n, triplets.collect::<Vec<_>>(), self.symmetric).expect("indices in range")
    }

    /// Structural and numerical symmetry check against the transpose.
    pub fn check_symmetric(&self, tol: f64) -> bool {
        let t = self.transpose();
        t.row_offsets == self.row_offsets
            && t.col_indices == self.col_indices
            && t.values.iter().zip(&self.values).all(|(a, b)| (a - b).abs() <= tol)
    }

    /// `c * A` for `c != 0`.
    pub fn scaled(&self, c: f64) -> Self {
        assert!(c != 0.0, "scaling by zero would store explicit zeros");
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `self + gamma * I`.
    pub fn add_identity(&self, gamma: f64) -> Self {
        let triplets = (0..self.n)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .chain((0..self.n).map(|i| (i, i, gamma)));
        SparseMatrix::from_triplets(self.n, triplets.collect::<Vec<_>>(), self.symmetric).expect("indices in range")
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(SeaError::DimensionMismatch { expected: self.n, actual: x.len() });
        }
        if y.len() != self.n {
            return Err(SeaError::DimensionMismatch { expected: self.n, actual: y.len() });
        }
        for (r, out) in y.iter_mut().enumerate() {
            let span = self.row_offsets[r]..self.row_offsets[r + 1];
            *out = self.col_indices[span.clone()].iter().zip(&self.values[span]).map(|(&c, &v)| v * x[c]).sum();
        }
        Ok(())
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        let ax = self.spmv(x)?;
        Ok(ax.iter().zip(x).map(|(a, b)| a * b).sum())
    }

    /// Sparse times dense: `A X` for an `n x f` matrix.
    pub fn mul_dense(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.n {
            return Err(SeaError::DimensionMismatch { expected: self.n, actual: x.nrows() });
        }
        let mut out = Array2::zeros((self.n, x.ncols()));
        for r in 0..self.n {
            let mut out_row = out.row_mut(r);
            for (c, v) in self.row(r) {
                out_row.scaled_add(v, &x.row(c));
            }
        }
        Ok(out)
    }

    /// `A^T X`, computed by scattering rows so no transpose is materialized.
    pub fn tr_mul_dense(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.n {
            return Err(SeaError::DimensionMismatch { expected: self.n, actual: x.nrows() });
        }
        let mut out = Array2::zeros((self.n, x.ncols()));
        for r in 0..self.n {
            let src = x.row(r);
            for (c, v) in self.row(r) {
                out.row_mut(c).scaled_add(v, &src);
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Connected components of the off-diagonal sparsity pattern, labelled
    /// in order of first appearance.
    pub fn pattern_components(&self) -> Vec<usize> {
        let mut labels = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..self.n {
            if labels[start] != usize::MAX {
                continue;
            }
            labels[start] = next;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for (v, _) in self.row(u) {
                    if labels[v] == usize::MAX {
                        labels[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        labels
    }
}

/// Combinatorial Laplacian `L = D - W` of a weighted graph.
pub fn build_laplacian(g: &WeightedGraph) -> SparseMatrix {
    let degrees = g.degrees();
    let triplets = g
        .edges()
        .iter()
        .flat_map(|e| [(e.p, e.q, -e.w), (e.q, e.p, -e.w)])
        .chain(degrees.iter().enumerate().map(|(i, &d)| (i, i, d)));
    SparseMatrix::from_triplets(g.n(), triplets.collect::<Vec<_>>(), true)
        .expect("graph ids are validated on construction")
}

/// `D^{-1/2} L D^{-1/2}` where `D` is the diagonal of `L`.
pub fn normalize_laplacian(l: &SparseMatrix) -> Result<SparseMatrix> {
    let diag = l.diagonal();
    if let Some(node) = diag.iter().position(|&d| d <= 0.0) {
        return Err(SeaError::ZeroDegreeNode { node });
    }
    let inv_sqrt: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    let triplets: Vec<_> = (0..l.n())
        .flat_map(|r| {
            let inv_sqrt = &inv_sqrt;
            l.row(r).map(move |(c, v)| {
                let scaled = if r == c { 1.0 } else { v * inv_sqrt[r] * inv_sqrt[c] };
                (r, c, scaled)
            })
        })
        .collect();
    SparseMatrix::from_triplets(l.n(), triplets, l.is_symmetric())
}
