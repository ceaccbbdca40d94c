//! Top eigenpairs of a Laplacian pencil from two kNN graphs, checked
//! against the dense reference solver.
//!
//! `cargo run --release --example pencil_eigenpairs`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sea_core::knn::{build_knn, FeatureMatrix, Metric};
use sea_core::sparse::dense_generalized_eig;
use sea_core::spectral::{pencil_residual, EigenOptions, LaplacianPencil};

fn main() -> sea_core::Result<()> {
    let n = 120;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
    // A distorted copy: one coordinate stretched, one squashed.
    let y: Vec<Vec<f64>> = x.iter().map(|r| vec![5.0 * r[0], r[1], 0.1 * r[2], r[3] * r[3]]).collect();
    let gx = build_knn(&FeatureMatrix::from_rows(&x)?, 8, Metric::Euclidean)?;
    let gy = build_knn(&FeatureMatrix::from_rows(&y)?, 8, Metric::Euclidean)?;

    let pencil = LaplacianPencil::from_graphs(&gx, &gy, false)?;
    let emb = pencil.embed(6, &EigenOptions::default())?;
    let dense = dense_generalized_eig(&pencil.lx.to_dense(), &pencil.ly.to_dense(), &pencil.deflation)?;
    let scale = pencil.lx.frobenius_norm();
    println!("{:>3} {:>14} {:>14} {:>12}", "i", "iterative", "dense", "residual");
    for (i, (z, v)) in emb.eigenvalues().iter().zip(emb.eigenvectors()).enumerate() {
        let r = pencil_residual(&pencil.lx, &pencil.ly, *z, v) / scale;
        println!("{i:>3} {z:>14.8} {:>14.8} {r:>12.2e}", dense[i].value);
    }
    Ok(())
}
