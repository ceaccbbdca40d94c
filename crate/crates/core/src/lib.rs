//! Spectral edge attack on graph neural networks.
//!
//! The crate scores how vulnerable each edge of a graph is by comparing the
//! kNN manifold of the raw input features with the kNN manifold of a trained
//! model's latent representations, through the generalized eigenstructure
//! of their Laplacian pencil. The highest-scoring edges are then reweighted
//! (never added, removed or rewired) and the accuracy drop is measured
//! against a random-reweighting baseline.
//!
//! Modules, bottom up:
//!
//! - [`sparse`]: CSR matrices, Laplacians, deflated CG, dense reference eigensolver
//! - [`knn`]: exact kNN graphs and connectivity
//! - [`spectral`]: pencil eigenpairs, weighted embedding, Spade scores, edge ranking
//! - [`gnn`]: tape-based reverse mode, GCN / GAT / GraphSAGE, Adam, training
//! - [`dataset`]: Cora ingestion, splits, synthetic fixtures
//! - [`attack`]: the end-to-end attack, random baseline and comparison tables
//! - [`cli`]: the `sea` command line

pub mod attack;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod gnn;
pub mod knn;
pub mod sparse;
pub mod spectral;

pub use error::{Result, SeaError};
