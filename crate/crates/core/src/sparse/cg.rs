use crate::error::{Result, SeaError};

use super::SparseMatrix;

const ORTHONORMAL_TOL: f64 = 1e-12;

/// Orthonormal set of vectors projected out of a solve.
///
/// For a combinatorial Laplacian the natural basis is one normalized
/// indicator vector per connected component, which spans the null space
/// exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct DeflationBasis {
    n: usize,
    vectors: Vec<Vec<f64>>,
}

impl DeflationBasis {
    pub fn new(n: usize, vectors: Vec<Vec<f64>>) -> Result<Self> {
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != n {
                return Err(SeaError::DimensionMismatch { expected: n, actual: v.len() });
            }
            for (j, u) in vectors.iter().enumerate().take(i + 1) {
                let d = dot(u, v);
                let expected = if i == j { 1.0 } else { 0.0 };
                if (d - expected).abs() > ORTHONORMAL_TOL {
                    return Err(SeaError::InvalidDeflation(format!("<v{j}, v{i}> = {d:e}, expected {expected}")));
                }
            }
        }
        Ok(DeflationBasis { n, vectors })
    }

    pub fn empty(n: usize) -> Self {
        DeflationBasis { n, vectors: Vec::new() }
    }

    /// The single vector `1/sqrt(n)`.
    pub fn constant(n: usize) -> Self {
        let v = vec![1.0 / (n as f64).sqrt(); n];
        DeflationBasis { n, vectors: vec![v] }
    }

    /// One normalized indicator vector per label value.
    pub fn from_components(labels: &[usize]) -> Self {
        let n = labels.len();
        let count = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; count];
        for &l in labels {
            sizes[l] += 1;
        }
        let vectors = (0..count)
            .map(|c| {
                let s = 1.0 / (sizes[c] as f64).sqrt();
                labels.iter().map(|&l| if l == c { s } else { 0.0 }).collect()
            })
            .collect();
        DeflationBasis { n, vectors }
    }

    /// Normalizes each weight vector; intended for disjointly supported
    /// inputs such as per-component `sqrt(degree)` vectors.
    pub fn from_disjoint_supports(n: usize, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let normalized = vectors
            .into_iter()
            .map(|v| {
                let norm = dot(&v, &v).sqrt();
                v.into_iter().map(|x| x / norm).collect()
            })
            .collect();
        Self::new(n, normalized)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// In-place `x <- (I - V V^T) x`.
    pub fn project(&self, x: &mut [f64]) {
        for v in &self.vectors {
            let c = dot(v, x);
            x.iter_mut().zip(v).for_each(|(xi, vi)| *xi -= c * vi);
        }
    }

    /// Largest `|<v, x>|` over the basis.
    pub fn max_overlap(&self, x: &[f64]) -> f64 {
        self.vectors.iter().map(|v| dot(v, x).abs()).fold(0.0, f64::max)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solver knobs shared by callers that issue many solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { tol: 1e-12, max_iter: 10_000 }
    }
}

/// Deflated, Jacobi-preconditioned conjugate gradient.
///
/// Solves `A x = P b` on the complement of `deflate`, where `P` is the
/// orthogonal projector onto that complement. For a positive semidefinite
/// `A` whose null space lies inside `span(deflate)` the result is the
/// pseudoinverse solution `A^+ P b`. The returned `x` is orthogonal to the
/// basis and satisfies `||A x - P b|| <= tol * ||P b||`.
pub fn cg_solve(a: &SparseMatrix, b: &[f64], deflate: &DeflationBasis, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let outcome = cg_best_effort(a, b, deflate, tol, max_iter)?;
    if outcome.converged {
        Ok(outcome.x)
    } else {
        Err(SeaError::NoConvergence { iterations: outcome.iterations, residual: outcome.relative_residual })
    }
}

/// Result of a CG run that may have stopped short of its tolerance.
#[derive(Debug, Clone)]
pub(crate) struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Same iteration as [`cg_solve`] but hands back the last iterate instead of
/// failing, for callers (the pencil solver) that tolerate inexact solves.
pub(crate) fn cg_best_effort(
    a: &SparseMatrix,
    b: &[f64],
    deflate: &DeflationBasis,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = a.n();
    if b.len() != n {
        return Err(SeaError::DimensionMismatch { expected: n, actual: b.len() });
    }
    if deflate.n() != n {
        return Err(SeaError::DimensionMismatch { expected: n, actual: deflate.n() });
    }
    let mut rhs = b.to_vec();
    deflate.project(&mut rhs);
    let rhs_norm = norm(&rhs);
    let mut x = vec![0.0; n];
    // Right-hand sides inside span(deflate) project to rounding noise.
    if rhs_norm <= 1e-14 * norm(b) || rhs_norm == 0.0 {
        return Ok(CgOutcome { x, iterations: 0, relative_residual: 0.0, converged: true });
    }
    let target = tol * rhs_norm;

    let diag = a.diagonal();
    let inv_diag: Vec<f64> =
        if diag.iter().all(|&d| d > 0.0) { diag.iter().map(|d| 1.0 / d).collect() } else { vec![1.0; n] };
    let precondition = |r: &[f64]| -> Vec<f64> {
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
        deflate.project(&mut z);
        z
    };

    let mut r = rhs.clone();
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    let mut residual = rhs_norm;
    // Outer loop restarts from the true residual when the recurrence drifts.
    while iterations < max_iter {
        let mut z = precondition(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            iterations += 1;
            a.spmv_into(&p, &mut ap)?;
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rz / pap;
            x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
            r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
            deflate.project(&mut r);
            if norm(&r) <= target {
                break;
            }
            z = precondition(&r);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        }
        deflate.project(&mut x);
        a.spmv_into(&x, &mut ap)?;
        r = rhs.iter().zip(&ap).map(|(bi, axi)| bi - axi).collect();
        residual = norm(&r);
        if residual <= target {
            return Ok(CgOutcome { x, iterations, relative_residual: residual / rhs_norm, converged: true });
        }
        deflate.project(&mut r);
        if dot(&r, &precondition(&r)) <= 0.0 {
            break;
        }
    }
    Ok(CgOutcome { x, iterations, relative_residual: residual / rhs_norm, converged: false })
}
