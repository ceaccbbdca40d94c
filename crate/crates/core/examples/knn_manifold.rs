//! kNN manifold graph of noisy points on two circles, with its components.
//!
//! `cargo run --release --example knn_manifold -- [k]`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sea_core::knn::{
    build_knn, build_knn_with, component_count, connected_components, EdgeWeighting, FeatureMatrix, KnnOptions, Metric,
};

fn main() -> sea_core::Result<()> {
    let k: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|i| {
            let (cx, r) = if i % 2 == 0 { (0.0, 1.0) } else { (10.0, 2.0) };
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            vec![cx + r * t.cos() + 0.05 * rng.random::<f64>(), r * t.sin()]
        })
        .collect();
    let f = FeatureMatrix::from_rows(&rows)?;

    let g = build_knn(&f, k, Metric::Euclidean)?;
    let labels = connected_components(&g);
    println!("k = {k}: {} edges, {} components", g.num_edges(), component_count(&labels));
    let degrees = g.degrees();
    let min = degrees.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = degrees.iter().cloned().fold(0.0, f64::max);
    println!("degree range [{min}, {max}] under union symmetrization");

    let weighted = build_knn_with(&f, &KnnOptions { weighting: EdgeWeighting::Gaussian, ..KnnOptions::new(k) })?;
    let w: Vec<f64> = weighted.edges().iter().map(|e| e.w).collect();
    println!(
        "gaussian weights in [{:.3e}, {:.3e}]",
        w.iter().cloned().fold(1.0, f64::min),
        w.iter().cloned().fold(0.0, f64::max)
    );
    Ok(())
}
