use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, SeaError};

use super::DeflationBasis;

/// Largest dimension accepted by [`dense_generalized_eig`].
pub const ORACLE_MAX_N: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseEigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// All eigenpairs of the pencil `A v = lambda B v` restricted to the
/// orthogonal complement of `deflate`, sorted by descending eigenvalue.
///
/// Works by reducing both matrices to an explicit orthonormal basis of the
/// complement, then a Cholesky-based symmetric reduction. Eigenvectors come
/// back `B`-orthonormal. `B` must be positive definite on the complement.
pub fn dense_generalized_eig(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    deflate: &DeflationBasis,
) -> Result<Vec<DenseEigenpair>> {
    let n = a.nrows();
    if n > ORACLE_MAX_N {
        return Err(SeaError::OracleScaleExceeded { n, limit: ORACLE_MAX_N });
    }
    for m in [a, b] {
        if m.nrows() != n || m.ncols() != n {
            return Err(SeaError::DimensionMismatch { expected: n, actual: m.ncols() });
        }
    }
    if deflate.n() != n {
        return Err(SeaError::DimensionMismatch { expected: n, actual: deflate.n() });
    }

    let q = complement_basis(n, deflate);
    let a_red = symmetrize(q.transpose() * a * &q);
    let b_red = symmetrize(q.transpose() * b * &q);
    let chol = b_red
        .cholesky()
        .ok_or_else(|| SeaError::InvalidDeflation("B is not positive definite on the deflated complement".into()))?;
    let l = chol.l();
    // C = L^{-1} A L^{-T}
    let left = l.solve_lower_triangular(&a_red).expect("Cholesky factor is nonsingular");
    let c = l.solve_lower_triangular(&left.transpose()).expect("Cholesky factor is nonsingular");
    let eig = SymmetricEigen::new(symmetrize(c));
    let back = l.transpose().solve_upper_triangular(&eig.eigenvectors).expect("Cholesky factor is nonsingular");
    let vectors = q * back;

    let mut pairs: Vec<DenseEigenpair> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &value)| DenseEigenpair { value, vector: vectors.column(i).iter().copied().collect() })
        .collect();
    pairs.sort_by(|x, y| y.value.total_cmp(&x.value));
    Ok(pairs)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Orthonormal basis (as columns) of the complement of `deflate`.
fn complement_basis(n: usize, deflate: &DeflationBasis) -> DMatrix<f64> {
    let mut projector = DMatrix::<f64>::identity(n, n);
    for v in deflate.vectors() {
        let v = DVector::from_column_slice(v);
        projector -= &v * v.transpose();
    }
    let eig = SymmetricEigen::new(symmetrize(projector));
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    let mut q = DMatrix::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        q.set_column(j, &eig.eigenvectors.column(i));
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{build_laplacian, WeightedGraph};

    fn cycle(n: usize) -> DMatrix<f64> {
        let g = WeightedGraph::unweighted(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap();
        build_laplacian(&g).to_dense()
    }

    #[test]
    fn identical_pencil_has_unit_spectrum() {
        let l = cycle(6);
        let pairs = dense_generalized_eig(&l, &l, &DeflationBasis::constant(6)).unwrap();
        assert_eq!(pairs.len(), 5);
        for p in &pairs {
            assert!((p.value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_pencil() {
        let l = cycle(7);
        let pairs = dense_generalized_eig(&(&l * 2.0), &l, &DeflationBasis::constant(7)).unwrap();
        assert!(pairs.iter().all(|p| (p.value - 2.0).abs() < 1e-12));
    }

    #[test]
    fn eigenvectors_are_b_orthonormal() {
        let a = cycle(5);
        let g = WeightedGraph::unweighted(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)]).unwrap();
        let b = build_laplacian(&g).to_dense();
        let pairs = dense_generalized_eig(&a, &b, &DeflationBasis::constant(5)).unwrap();
        for (i, x) in pairs.iter().enumerate() {
            for (j, y) in pairs.iter().enumerate() {
                let x = DVector::from_column_slice(&x.vector);
                let y = DVector::from_column_slice(&y.vector);
                let d = (x.transpose() * &b * y)[(0, 0)];
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_large_inputs() {
        let m = DMatrix::<f64>::identity(513, 513);
        assert!(matches!(
            dense_generalized_eig(&m, &m, &DeflationBasis::empty(513)),
            Err(SeaError::OracleScaleExceeded { n: 513, .. })
        ));
    }
}
