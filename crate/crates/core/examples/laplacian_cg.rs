//! Laplacian of a small weighted graph and a deflated CG solve of `L x = b`.
//!
//! `cargo run --release --example laplacian_cg`

use sea_core::sparse::{build_laplacian, cg_solve, DeflationBasis, WeightedGraph};

fn main() -> sea_core::Result<()> {
    // A 6-cycle with one heavy chord.
    let g = WeightedGraph::new(
        6,
        [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 5, 1.0), (5, 0, 1.0), (0, 3, 4.0)],
    )?;
    let l = build_laplacian(&g);
    println!("n = {}, nnz = {}, trace = {}", l.n(), l.nnz(), l.trace());

    // b must be orthogonal to the constant vector, the null space of L.
    let b = [1.0, -1.0, 2.0, -2.0, 0.5, -0.5];
    let defl = DeflationBasis::constant(6);
    let x = cg_solve(&l, &b, &defl, 1e-12, 1000)?;
    println!("x = {x:.6?}");
    let lx = l.spmv(&x)?;
    let err = lx.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    println!("max |L x - b| = {err:.2e}, sum x = {:.2e}", x.iter().sum::<f64>());
    Ok(())
}
