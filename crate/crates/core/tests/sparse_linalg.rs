mod common;

use common::{dot, norm, random_connected_graph, random_vector, rng};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;
use sea_core::sparse::{
    build_laplacian, cg_solve, dense_generalized_eig, normalize_laplacian, DeflationBasis, SparseMatrix,
};

#[test]
fn quadratic_form_matches_edge_sum() {
    let mut r = rng(1);
    let g = random_connected_graph(10, 15, true, &mut r);
    let l = build_laplacian(&g);
    for _ in 0..100 {
        let x = random_vector(10, &mut r);
        let oracle: f64 = g.edges().iter().map(|e| e.w * (x[e.p] - x[e.q]).powi(2)).sum();
        assert!((l.quadratic_form(&x).unwrap() - oracle).abs() < 1e-10);
    }
}

#[test]
fn laplacian_rows_sum_to_zero_and_psd() {
    let mut r = rng(2);
    for _ in 0..5 {
        let g = random_connected_graph(25, 40, true, &mut r);
        let l = build_laplacian(&g);
        assert!(l.check_symmetric(0.0));
        for row in 0..l.n() {
            let s: f64 = l.row(row).map(|(_, v)| v).sum();
            assert!(s.abs() < 1e-12);
        }
        for _ in 0..1000 {
            let x = random_vector(25, &mut r);
            assert!(l.quadratic_form(&x).unwrap() >= -1e-12);
        }
    }
}

#[test]
fn normalized_spectrum_in_unit_interval_doubled() {
    let mut r = rng(3);
    let g = random_connected_graph(20, 30, true, &mut r);
    let n = normalize_laplacian(&build_laplacian(&g)).unwrap();
    assert!(n.diagonal().iter().all(|&d| d == 1.0));
    let eig = SymmetricEigen::new(n.to_dense());
    for &v in eig.eigenvalues.iter() {
        assert!((-1e-10..=2.0 + 1e-10).contains(&v), "eigenvalue {v}");
    }
}

#[test]
fn spmv_matches_dense_multiply() {
    let mut r = rng(4);
    let mut dense = vec![vec![0.0; 30]; 30];
    let mut triplets = Vec::new();
    for (i, row) in dense.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            if r.random::<f64>() < 0.15 {
                let v = r.random::<f64>() * 4.0 - 2.0;
                *entry = v;
                triplets.push((i, j, v));
            }
        }
    }
    let a = SparseMatrix::from_triplets(30, triplets, false).unwrap();
    let x = random_vector(30, &mut r);
    let y = a.spmv(&x).unwrap();
    for i in 0..30 {
        let expected: f64 = (0..30).map(|j| dense[i][j] * x[j]).sum();
        assert!((y[i] - expected).abs() < 1e-12);
    }
    let id = SparseMatrix::identity(30);
    assert_eq!(id.spmv(&x).unwrap(), x);
}

#[test]
fn cg_residual_and_orthogonality() {
    let mut r = rng(5);
    let g = random_connected_graph(60, 120, true, &mut r);
    let l = build_laplacian(&g);
    let defl = DeflationBasis::constant(60);
    let mut b = random_vector(60, &mut r);
    defl.project(&mut b);
    let tol = 1e-10;
    let x = cg_solve(&l, &b, &defl, tol, 1000).unwrap();
    let ax = l.spmv(&x).unwrap();
    let res: Vec<f64> = ax.iter().zip(&b).map(|(a, b)| a - b).collect();
    assert!(norm(&res) <= tol * norm(&b));
    assert!(defl.max_overlap(&x) < 1e-10);
}

#[test]
fn cg_recovers_consistent_solution() {
    let mut r = rng(6);
    let g = random_connected_graph(30, 50, false, &mut r);
    let l = build_laplacian(&g);
    let defl = DeflationBasis::constant(30);
    let mut y = random_vector(30, &mut r);
    defl.project(&mut y);
    let b = l.spmv(&y).unwrap();
    let tol = 1e-12;
    let x = cg_solve(&l, &b, &defl, tol, 1000).unwrap();
    let err: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
    // Error is bounded by the residual over the smallest nonzero eigenvalue.
    assert!(norm(&err) < 1e-9 * norm(&y));
}

#[test]
fn cg_matches_dense_pseudoinverse() {
    let mut r = rng(7);
    let g = random_connected_graph(40, 60, true, &mut r);
    let l = build_laplacian(&g);
    let pinv = l.to_dense().pseudo_inverse(1e-10).unwrap();
    for _ in 0..5 {
        let b = random_vector(40, &mut r);
        let expected = &pinv * DVector::from_column_slice(&b);
        let x = cg_solve(&l, &b, &DeflationBasis::constant(40), 1e-13, 2000).unwrap();
        for i in 0..40 {
            assert!((x[i] - expected[i]).abs() < 1e-8, "entry {i}: {} vs {}", x[i], expected[i]);
        }
    }
}

#[test]
fn cg_with_per_component_deflation() {
    // Two disjoint paths: null space is two-dimensional.
    let g = sea_core::sparse::WeightedGraph::unweighted(6, [(0, 1), (1, 2), (3, 4), (4, 5)]).unwrap();
    let l = build_laplacian(&g);
    let defl = DeflationBasis::from_components(&l.pattern_components());
    assert_eq!(defl.dim(), 2);
    let b = [1.0, 0.0, 0.0, 0.0, 0.0, 3.0];
    let x = cg_solve(&l, &b, &defl, 1e-12, 100).unwrap();
    assert!(defl.max_overlap(&x) < 1e-10);
    let pinv = l.to_dense().pseudo_inverse(1e-10).unwrap();
    let expected = pinv * DVector::from_column_slice(&b);
    for i in 0..6 {
        assert!((x[i] - expected[i]).abs() < 1e-9);
    }
}

fn rayleigh(a: &DMatrix<f64>, b: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(a * x)) / x.dot(&(b * x))
}

/// Maximizes `x^T A x / x^T B x` over `x` orthogonal to the constant vector
/// with projected gradient ascent and an adaptive step.
fn projected_gradient_max(a: &DMatrix<f64>, b: &DMatrix<f64>, seed: u64) -> f64 {
    let n = a.nrows();
    let mut r = rng(seed);
    let project = |v: &mut DVector<f64>| {
        let mean = v.mean();
        v.iter_mut().for_each(|x| *x -= mean);
    };
    let mut x = DVector::from_vec(random_vector(n, &mut r));
    project(&mut x);
    x /= x.norm();
    let mut value = rayleigh(a, b, &x);
    let mut step = 1e-2;
    for _ in 0..400_000 {
        let bx = b * &x;
        let mut grad = (a * &x - &bx * value) * (2.0 / x.dot(&bx));
        project(&mut grad);
        if grad.norm() < 1e-13 {
            break;
        }
        let mut candidate = &x + &grad * step;
        candidate /= candidate.norm();
        let cv = rayleigh(a, b, &candidate);
        if cv > value {
            x = candidate;
            value = cv;
            step *= 1.3;
        } else {
            step *= 0.5;
            if step < 1e-18 {
                break;
            }
        }
    }
    value
}

#[test]
fn dense_top_eigenvalue_matches_rayleigh_maximization() {
    let mut r = rng(8);
    for trial in 0..3 {
        let a = build_laplacian(&random_connected_graph(30, 40, false, &mut r)).to_dense();
        let b = build_laplacian(&random_connected_graph(30, 40, false, &mut r)).to_dense();
        let pairs = dense_generalized_eig(&a, &b, &DeflationBasis::constant(30)).unwrap();
        let best = projected_gradient_max(&a, &b, 100 + trial);
        let top = pairs[0].value;
        assert!((top - best).abs() <= 1e-6 * top, "trial {trial}: eig {top} vs ascent {best}");
    }
}

#[test]
fn dense_residuals_and_pencil_identity() {
    let mut r = rng(9);
    let a = build_laplacian(&random_connected_graph(35, 50, true, &mut r)).to_dense();
    let b = build_laplacian(&random_connected_graph(35, 50, true, &mut r)).to_dense();
    let pairs = dense_generalized_eig(&a, &b, &DeflationBasis::constant(35)).unwrap();
    assert_eq!(pairs.len(), 34);
    for p in &pairs {
        let v = DVector::from_column_slice(&p.vector);
        let res = (&a * &v - &b * &v * p.value).norm();
        assert!(res <= 1e-8 * a.norm(), "residual {res}");
        assert!(p.value >= -1e-10);
    }
    assert!(pairs.windows(2).all(|w| w[0].value >= w[1].value));

    let same = dense_generalized_eig(&b, &b, &DeflationBasis::constant(35)).unwrap();
    assert!(same.iter().all(|p| (p.value - 1.0).abs() < 1e-10));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pencil_scale_law(seed in 0u64..10_000, c in 0.1f64..50.0) {
        let mut r = rng(seed);
        let a = build_laplacian(&random_connected_graph(15, 20, true, &mut r)).to_dense();
        let b = build_laplacian(&random_connected_graph(15, 20, true, &mut r)).to_dense();
        let defl = DeflationBasis::constant(15);
        let base = dense_generalized_eig(&a, &b, &defl).unwrap();
        let scaled = dense_generalized_eig(&(&a * c), &b, &defl).unwrap();
        for (x, y) in base.iter().zip(&scaled) {
            prop_assert!((y.value - c * x.value).abs() <= 1e-10 * (c * x.value).abs().max(1.0));
            // Same vector up to sign when the eigenvalue is simple.
            let gap_ok = base.iter().filter(|z| (z.value - x.value).abs() < 1e-6 * x.value.abs().max(1.0)).count() == 1;
            if gap_ok {
                let overlap = dot(&x.vector, &y.vector).abs() / (norm(&x.vector) * norm(&y.vector));
                prop_assert!((overlap - 1.0).abs() < 1e-8);
            }
        }
    }
}
