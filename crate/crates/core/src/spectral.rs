//! Generalized eigenstructure of a Laplacian pencil `(L_X, L_Y)` and the
//! per-edge Spade scores derived from it.
//!
//! The top eigenpairs of `L_Y^+ L_X` are found by blocked subspace iteration:
//! each sweep applies `L_X`, then the pseudoinverse of `L_Y` through deflated
//! CG, re-orthonormalizes the block and performs a Rayleigh-Ritz step on the
//! pencil. The weighted embedding `V_s = [v_i sqrt(zeta_i)]` turns every node
//! into an `s`-dimensional point, and an edge's score is the squared distance
//! between its endpoints in that space.

use std::io::Write;

use log::{debug, warn};
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SeaError};
use crate::sparse::{
    build_laplacian, cg_best_effort, normalize_laplacian, CgOptions, DeflationBasis, SparseMatrix, WeightedGraph,
};

const INEXACT_SOLVE_LIMIT: f64 = 1e-6;

/// Top-`s` pencil eigenpairs plus the weighted subspace `V_s`.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
    weighted: Array2<f64>,
    pub iterations: usize,
    /// `gamma` added to `L_Y` when the regularization fallback fired.
    pub regularization: Option<f64>,
}

impl SpectralEmbedding {
    /// Builds an embedding from explicit eigenpairs (sorted descending).
    pub fn from_parts(eigenvalues: Vec<f64>, eigenvectors: Vec<Vec<f64>>) -> Result<Self> {
        if eigenvalues.len() != eigenvectors.len() {
            return Err(SeaError::DimensionMismatch { expected: eigenvalues.len(), actual: eigenvectors.len() });
        }
        let n = eigenvectors.first().map_or(0, Vec::len);
        if eigenvectors.iter().any(|v| v.len() != n) {
            return Err(SeaError::ShapeMismatch {
                context: "embedding",
                detail: "eigenvectors differ in length".into(),
            });
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(SeaError::ShapeMismatch {
                context: "embedding",
                detail: "eigenvalues must be descending".into(),
            });
        }
        let mut weighted = Array2::zeros((n, eigenvalues.len()));
        for (i, (zeta, v)) in eigenvalues.iter().zip(&eigenvectors).enumerate() {
            let scale = zeta.max(0.0).sqrt();
            for (p, vp) in v.iter().enumerate() {
                weighted[(p, i)] = vp * scale;
            }
        }
        Ok(SpectralEmbedding { eigenvalues, eigenvectors, weighted, iterations: 0, regularization: None })
    }

    pub fn s(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n(&self) -> usize {
        self.weighted.nrows()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &[Vec<f64>] {
        &self.eigenvectors
    }

    /// `V_s`, an `n x s` matrix.
    pub fn weighted_subspace(&self) -> &Array2<f64> {
        &self.weighted
    }
}

/// Knobs of the iterative pencil solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Residual bound relative to `||L_X||_F`.
    pub tol: f64,
    /// Extra block columns beyond `s`.
    pub oversample: usize,
    pub max_outer: usize,
    /// Relative eigenvalue change that counts as settled.
    pub eig_rel_change: f64,
    pub seed: u64,
    pub cg: CgOptions,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-8,
            oversample: 8,
            max_outer: 500,
            eig_rel_change: 1e-9,
            seed: 0x5EA,
            cg: CgOptions::default(),
        }
    }
}

/// Laplacians of an input-space graph `G_X` and a latent-space graph `G_Y`
/// together with the exact null-space basis of `L_Y`.
#[derive(Debug, Clone)]
pub struct LaplacianPencil {
    pub lx: SparseMatrix,
    pub ly: SparseMatrix,
    pub deflation: DeflationBasis,
}

impl LaplacianPencil {
    /// Combinatorial (default) or normalized Laplacians of both graphs.
    pub fn from_graphs(gx: &WeightedGraph, gy: &WeightedGraph, normalized: bool) -> Result<Self> {
        if gx.n() != gy.n() {
            return Err(SeaError::DimensionMismatch { expected: gx.n(), actual: gy.n() });
        }
        let lx = build_laplacian(gx);
        let ly = build_laplacian(gy);
        let labels = ly.pattern_components();
        if !normalized {
            return Ok(LaplacianPencil { deflation: DeflationBasis::from_components(&labels), lx, ly });
        }
        // null(D^{-1/2} L D^{-1/2}) is spanned by D^{1/2} 1 on each component.
        let degrees = gy.degrees();
        let count = labels.iter().copied().max().map_or(0, |m| m + 1);
        let vectors = (0..count)
            .map(|c| labels.iter().zip(&degrees).map(|(&l, &d)| if l == c { d.sqrt() } else { 0.0 }).collect())
            .collect();
        let deflation = DeflationBasis::from_disjoint_supports(gy.n(), vectors)?;
        Ok(LaplacianPencil { lx: normalize_laplacian(&lx)?, ly: normalize_laplacian(&ly)?, deflation })
    }

    pub fn embed(&self, s: usize, opts: &EigenOptions) -> Result<SpectralEmbedding> {
        solve_pencil(&self.lx, &self.ly, Some(&self.deflation), s, opts)
    }
}

/// Top-`s` eigenpairs of `L_Y^+ L_X` with residuals bounded by
/// `tol * ||L_X||_F`.
///
/// The null space of `L_Y` is taken to be the component indicators of its
/// sparsity pattern, which is exact for combinatorial Laplacians. Use
/// [`LaplacianPencil`] for normalized ones.
pub fn generalized_eigenpairs(lx: &SparseMatrix, ly: &SparseMatrix, s: usize, tol: f64) -> Result<SpectralEmbedding> {
    let opts = EigenOptions { tol, ..EigenOptions::default() };
    solve_pencil(lx, ly, None, s, &opts)
}

pub fn generalized_eigenpairs_with(
    lx: &SparseMatrix,
    ly: &SparseMatrix,
    deflation: Option<&DeflationBasis>,
    s: usize,
    opts: &EigenOptions,
) -> Result<SpectralEmbedding> {
    solve_pencil(lx, ly, deflation, s, opts)
}

fn solve_pencil(
    lx: &SparseMatrix,
    ly: &SparseMatrix,
    deflation: Option<&DeflationBasis>,
    s: usize,
    opts: &EigenOptions,
) -> Result<SpectralEmbedding> {
    let n = lx.n();
    if ly.n() != n {
        return Err(SeaError::DimensionMismatch { expected: n, actual: ly.n() });
    }
    let deflation = match deflation {
        Some(d) => d.clone(),
        None => DeflationBasis::from_components(&ly.pattern_components()),
    };
    let lx_norm = lx.frobenius_norm();
    let null_consistent = deflation.vectors().iter().all(|v| {
        let lv = lx.spmv(v).expect("dimensions checked");
        lv.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-9 * lx_norm.max(1.0)
    });
    if null_consistent {
        if s > n - deflation.dim() {
            return Err(SeaError::SubspaceTooLarge { requested: s, available: n - deflation.dim() });
        }
        let action = InverseAction { op: ly.clone(), null: deflation.clone(), gamma: None, outer: deflation.clone() };
        match subspace_iteration(lx, &action, s, opts) {
            Ok(emb) => return Ok(emb),
            Err(SeaError::NoConvergence { iterations, residual }) => {
                warn!("pencil solve did not converge ({iterations} iterations, residual {residual:.3e}); regularizing L_Y");
            }
            Err(e) => return Err(e),
        }
    } else {
        warn!("null(L_Y) is not contained in null(L_X) ({} deflation vectors); regularizing L_Y", deflation.dim());
    }

    let gamma = 1e-8 * ly.trace() / n as f64;
    let constant = DeflationBasis::constant(n);
    let c = &constant.vectors()[0];
    let in_both_nulls = [lx, ly].iter().all(|m| {
        let v = m.spmv(c).expect("dimensions checked");
        v.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-9 * m.frobenius_norm().max(1.0)
    });
    let outer = if in_both_nulls { constant } else { DeflationBasis::empty(n) };
    if s > n - outer.dim() {
        return Err(SeaError::SubspaceTooLarge { requested: s, available: n - outer.dim() });
    }
    let action = InverseAction { op: ly.add_identity(gamma), null: deflation, gamma: Some(gamma), outer };
    let mut emb = subspace_iteration(lx, &action, s, opts)?;
    emb.regularization = Some(gamma);
    Ok(emb)
}

/// Action of `L_Y^+`, or of `(L_Y + gamma I)^{-1}` once regularized.
///
/// `null` is the exact null basis of `L_Y`. It is an invariant subspace of
/// `L_Y + gamma I` with eigenvalue `gamma`, so that part of the inverse is
/// applied in closed form and CG only runs on the well-conditioned rest.
struct InverseAction {
    op: SparseMatrix,
    null: DeflationBasis,
    gamma: Option<f64>,
    /// Subspace the eigen-iteration is restricted away from.
    outer: DeflationBasis,
}

impl InverseAction {
    /// The part of the inverse action that lives outside `null`. In the
    /// regularized case the remaining `null` part is `N N^T b / gamma`,
    /// which [`InverseAction::closed_form_basis`] supplies to the Ritz step
    /// instead of being added here, avoiding catastrophic cancellation
    /// between terms of order `1/gamma` and order one.
    fn apply(&self, b: &[f64], cg: &CgOptions) -> Result<Vec<f64>> {
        let solve = cg_best_effort(&self.op, b, &self.null, cg.tol, cg.max_iter)?;
        // Inexact solves only slow the sweep down; the Ritz residual test is
        // evaluated with the exact matrices.
        if solve.relative_residual > INEXACT_SOLVE_LIMIT {
            return Err(SeaError::NoConvergence { iterations: solve.iterations, residual: solve.relative_residual });
        }
        let mut x = solve.x;
        self.outer.project(&mut x);
        Ok(x)
    }

    /// Orthonormal directions spanning the regularized null part, already
    /// projected off the outer deflation.
    fn closed_form_basis(&self) -> Vec<Vec<f64>> {
        if self.gamma.is_none() {
            return Vec::new();
        }
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for v in self.null.vectors() {
            let mut u = v.clone();
            for _ in 0..2 {
                self.outer.project(&mut u);
                for w in &basis {
                    let c = dot(w, &u);
                    u.iter_mut().zip(w).for_each(|(ui, wi)| *ui -= c * wi);
                }
            }
            let norm = dot(&u, &u).sqrt();
            if norm > 1e-8 {
                u.iter_mut().for_each(|x| *x /= norm);
                basis.push(u);
            }
        }
        basis
    }
}

fn subspace_iteration(
    lx: &SparseMatrix,
    action: &InverseAction,
    s: usize,
    opts: &EigenOptions,
) -> Result<SpectralEmbedding> {
    let n = lx.n();
    let ly = &action.op;
    let deflation = &action.outer;
    let available = n - deflation.dim();
    let m = (s + opts.oversample).min(available);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut block: Vec<Vec<f64>> = (0..m).map(|_| random_vector(n, &mut rng)).collect();
    orthonormalize(&mut block, deflation, &mut rng);

    let lx_norm = lx.frobenius_norm();
    let ly_norm = ly.frobenius_norm();
    // Unregularized: the absolute bound tol * ||L_X||_F. Regularized pencils
    // carry eigenvalues of order 1/gamma, for which only a backward-error
    // bound is attainable in floating point.
    let target = |zeta: f64, v: &[f64]| match action.gamma {
        None => opts.tol * lx_norm,
        Some(_) => opts.tol * (lx_norm + zeta.abs() * ly_norm) * dot(v, v).sqrt(),
    };
    let fixed = action.closed_form_basis();
    let mut previous: Option<Vec<f64>> = None;
    let mut worst = f64::INFINITY;
    for iteration in 1..=opts.max_outer {
        let mut next = fixed.clone();
        for x in &block {
            let w = lx.spmv(x)?;
            next.push(action.apply(&w, &opts.cg)?);
        }
        orthonormalize(&mut next, deflation, &mut rng);
        let (values, mut ritz) = rayleigh_ritz(lx, ly, &next)?;
        ritz.truncate(m);
        block = ritz;

        // Ratio of residual to its allowed bound; <= 1 means converged.
        worst = (0..s)
            .map(|i| pencil_residual(lx, ly, values[i], &block[i]) / target(values[i], &block[i]))
            .fold(0.0, f64::max);
        let settled = previous.as_ref().is_some_and(|prev| {
            (0..s).all(|i| (values[i] - prev[i]).abs() <= opts.eig_rel_change * values[i].abs().max(f64::MIN_POSITIVE))
        });
        if settled && worst <= 1.0 {
            debug!("pencil converged after {iteration} sweeps");
            let mut vectors: Vec<Vec<f64>> = block.into_iter().take(s).collect();
            vectors.iter_mut().for_each(|v| fix_sign(v));
            let mut emb = SpectralEmbedding::from_parts(values[..s].to_vec(), vectors)?;
            emb.iterations = iteration;
            return Ok(emb);
        }
        previous = Some(values);
    }
    Err(SeaError::NoConvergence { iterations: opts.max_outer, residual: worst * opts.tol })
}

/// `||L_X v - zeta L_Y v||_2`.
pub fn pencil_residual(lx: &SparseMatrix, ly: &SparseMatrix, zeta: f64, v: &[f64]) -> f64 {
    let a = lx.spmv(v).expect("dimensions checked");
    let b = ly.spmv(v).expect("dimensions checked");
    a.iter().zip(&b).map(|(x, y)| (x - zeta * y).powi(2)).sum::<f64>().sqrt()
}

fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Modified Gram-Schmidt on the deflated complement, run twice for
/// stability. Columns that collapse are replaced by fresh random directions.
fn orthonormalize(block: &mut [Vec<f64>], deflation: &DeflationBasis, rng: &mut ChaCha8Rng) {
    let scale = block.iter().map(|v| dot(v, v).sqrt()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..block.len() {
        let mut attempts = 0;
        loop {
            let (done, rest) = block.split_at_mut(j);
            let v = &mut rest[0];
            let before = dot(v, v).sqrt();
            for _ in 0..2 {
                deflation.project(v);
                for u in done.iter() {
                    let c = dot(u, v);
                    v.iter_mut().zip(u).for_each(|(vi, ui)| *vi -= c * ui);
                }
            }
            let norm = dot(v, v).sqrt();
            let collapsed = norm <= 1e-10 * scale || norm <= 1e-8 * before;
            if !collapsed || attempts >= 8 {
                v.iter_mut().for_each(|x| *x /= norm);
                break;
            }
            *v = random_vector(v.len(), rng);
            attempts += 1;
        }
    }
}

/// Rayleigh-Ritz on the span of an orthonormal block: returns Ritz values
/// (descending) and `L_Y`-orthonormal Ritz vectors.
fn rayleigh_ritz(lx: &SparseMatrix, ly: &SparseMatrix, basis: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = basis.len();
    let ax: Vec<Vec<f64>> = basis.iter().map(|v| lx.spmv(v)).collect::<Result<_>>()?;
    let bx: Vec<Vec<f64>> = basis.iter().map(|v| ly.spmv(v)).collect::<Result<_>>()?;
    let mut a = DMatrix::zeros(m, m);
    let mut b = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let aij = 0.5 * (dot(&basis[i], &ax[j]) + dot(&basis[j], &ax[i]));
            let bij = 0.5 * (dot(&basis[i], &bx[j]) + dot(&basis[j], &bx[i]));
            a[(i, j)] = aij;
            a[(j, i)] = aij;
            b[(i, j)] = bij;
            b[(j, i)] = bij;
        }
    }
    let chol = b.cholesky().ok_or(SeaError::NoConvergence { iterations: 0, residual: f64::INFINITY })?;
    let l = chol.l();
    let tmp = l.solve_lower_triangular(&a).expect("nonsingular factor");
    let mut c = l.solve_lower_triangular(&tmp.transpose()).expect("nonsingular factor");
    c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let coeffs = l.transpose().solve_upper_triangular(&eig.eigenvectors).expect("nonsingular factor");

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let n = basis[0].len();
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&k| {
            let mut v = vec![0.0; n];
            for (j, bj) in basis.iter().enumerate() {
                let c = coeffs[(j, k)];
                v.iter_mut().zip(bj).for_each(|(vi, x)| *vi += c * x);
            }
            v
        })
        .collect();
    Ok((values, vectors))
}

/// Flips `v` so that its first entry of significant magnitude is positive.
fn fix_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-6 * max) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Spade score of one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeScore {
    pub p: usize,
    pub q: usize,
    pub score: f64,
}

impl EdgeScore {
    pub fn pair(&self) -> (usize, usize) {
        (self.p, self.q)
    }
}

/// `||V_s^T (e_p - e_q)||^2`, the squared distance between rows `p` and `q`
/// of the weighted subspace.
pub fn spade_score(emb: &SpectralEmbedding, p: usize, q: usize) -> Result<f64> {
    let n = emb.n();
    for node in [p, q] {
        if node >= n {
            return Err(SeaError::NodeOutOfRange { node, n });
        }
    }
    let v = emb.weighted_subspace();
    let diff = &v.row(p) - &v.row(q);
    Ok(diff.dot(&diff))
}

pub fn score_edges(emb: &SpectralEmbedding, edges: &[(usize, usize)]) -> Result<Vec<EdgeScore>> {
    edges.iter().map(|&(p, q)| spade_score(emb, p, q).map(|score| EdgeScore { p, q, score })).collect()
}

/// `ceil(fraction * total)`, robust to products that land a rounding error
/// above an integer (e.g. `0.07 * 100`).
pub fn budget(fraction: f64, total: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SeaError::InvalidFraction(fraction));
    }
    let x = fraction * total as f64;
    let nearest = x.round();
    let count = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { x.ceil() };
    Ok((count as usize).min(total))
}

/// The `ceil(fraction * |E|)` highest-scoring edges, in descending score
/// order with ties broken by `(p, q)` ascending.
pub fn rank_and_select(scores: &[EdgeScore], fraction: f64) -> Result<Vec<EdgeScore>> {
    if scores.is_empty() {
        return Err(SeaError::EmptyEdgeSet);
    }
    let count = budget(fraction, scores.len())?;
    let mut ranked = rank(scores);
    ranked.truncate(count);
    Ok(ranked)
}

/// All scores sorted descending, ties by `(p, q)` ascending.
pub fn rank(scores: &[EdgeScore]) -> Vec<EdgeScore> {
    let mut ranked = scores.to_vec();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.pair().cmp(&b.pair())));
    ranked
}

/// Writes `p,q,score` rows (descending) with 17 significant digits.
pub fn write_scores_csv<W: Write>(mut out: W, scores: &[EdgeScore]) -> std::io::Result<()> {
    writeln!(out, "p,q,score")?;
    for s in rank(scores) {
        writeln!(out, "{},{},{:.16e}", s.p, s.q, s.score)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(values: &[f64], vectors: &[&[f64]]) -> SpectralEmbedding {
        SpectralEmbedding::from_parts(values.to_vec(), vectors.iter().map(|v| v.to_vec()).collect()).unwrap()
    }

    #[test]
    fn single_term_score() {
        let e = emb(&[4.0], &[&[0.75, 0.25, 0.0]]);
        assert_eq!(spade_score(&e, 0, 1).unwrap(), 1.0);
    }

    #[test]
    fn identical_rows_score_zero() {
        let e = emb(&[2.0, 1.0], &[&[0.3, 0.3, -0.6], &[0.1, 0.1, 0.5]]);
        assert_eq!(spade_score(&e, 0, 1).unwrap(), 0.0);
        assert!(spade_score(&e, 0, 2).unwrap() > 0.0);
    }

    #[test]
    fn out_of_range_node() {
        let e = emb(&[1.0], &[&[0.0, 1.0]]);
        assert!(matches!(spade_score(&e, 0, 5), Err(SeaError::NodeOutOfRange { node: 5, n: 2 })));
    }

    #[test]
    fn budget_arithmetic() {
        assert_eq!(budget(0.1, 10).unwrap(), 1);
        assert_eq!(budget(0.1, 5429).unwrap(), 543);
        assert_eq!(budget(0.07, 100).unwrap(), 7);
        assert_eq!(budget(1.0, 17).unwrap(), 17);
        assert_eq!(budget(1e-6, 17).unwrap(), 1);
        assert!(matches!(budget(0.0, 10), Err(SeaError::InvalidFraction(_))));
        assert!(matches!(budget(1.5, 10), Err(SeaError::InvalidFraction(_))));
    }

    #[test]
    fn selection_ordering_and_ties() {
        let scores: Vec<EdgeScore> = [(0, 1, 0.5), (1, 2, 2.0), (0, 2, 2.0), (2, 3, 1.0)]
            .iter()
            .map(|&(p, q, score)| EdgeScore { p, q, score })
            .collect();
        let top = rank_and_select(&scores, 0.5).unwrap();
        assert_eq!(top.iter().map(EdgeScore::pair).collect::<Vec<_>>(), vec![(0, 2), (1, 2)]);
        let all = rank_and_select(&scores, 1.0).unwrap();
        assert_eq!(all.len(), 4);
        assert_eq!(all[3].pair(), (0, 1));
        assert!(matches!(rank_and_select(&[], 0.5), Err(SeaError::EmptyEdgeSet)));
    }

    #[test]
    fn csv_dump_format() {
        let scores = vec![EdgeScore { p: 0, q: 1, score: 0.1 }, EdgeScore { p: 1, q: 2, score: 3.0 }];
        let mut buf = Vec::new();
        write_scores_csv(&mut buf, &scores).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "p,q,score\n1,2,3.0000000000000000e0\n0,1,1.0000000000000001e-1\n");
    }
}
