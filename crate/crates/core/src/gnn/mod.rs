//! Weighted GCN, GAT and GraphSAGE on a small reverse-mode tape, with Adam
//! training, evaluation and latent-representation extraction.

mod checkpoint;
mod model;
pub mod tape;
mod train;

pub use checkpoint::{from_bytes, load_checkpoint, save_checkpoint, to_bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use model::{
    attention_neighborhoods, mean_aggregator, normalize_adjacency, Arch, BatchNormStats, Forward, GnnModel, GraphOps,
    Mode,
};
pub use tape::{attention_coefficients, Neighborhoods, Tape, Var};
pub use train::{
    argmax_rows, evaluate, evaluate_on, extract_embeddings, fit, gat_forward, gcn_forward, logits_with,
    loss_and_gradients, sage_forward, train, EpochStats, Layer, TrainConfig, ADAM_BETAS, ADAM_EPS,
};
