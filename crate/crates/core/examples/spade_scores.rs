//! Spade scores of a graph's edges and the top-10% selection, written as CSV
//! to standard output.
//!
//! `cargo run --release --example spade_scores > scores.csv`

use sea_core::dataset::synthetic_blobs;
use sea_core::knn::{build_knn, FeatureMatrix, Metric};
use sea_core::spectral::{rank_and_select, score_edges, write_scores_csv, EigenOptions, LaplacianPencil};

fn main() -> sea_core::Result<()> {
    let data = synthetic_blobs(200, 5, 4, 1.0, 7)?;
    // Stand-in for a learned map: squash every coordinate through tanh.
    let mapped = data.features.as_array().mapv(|v| (0.7 * v).tanh());
    let gx = build_knn(&data.features, 10, Metric::Euclidean)?;
    let gy = build_knn(&FeatureMatrix::new(mapped)?, 10, Metric::Euclidean)?;

    let emb = LaplacianPencil::from_graphs(&gx, &gy, false)?.embed(8, &EigenOptions::default())?;
    let scores = score_edges(&emb, &data.graph.edge_pairs())?;
    let top = rank_and_select(&scores, 0.1)?;
    eprintln!("eigenvalues {:.3?}", emb.eigenvalues());
    eprintln!("{} of {} edges selected; highest score {:.4}", top.len(), scores.len(), top[0].score);
    write_scores_csv(std::io::stdout().lock(), &scores).map_err(|e| sea_core::SeaError::io("stdout", e))
}
