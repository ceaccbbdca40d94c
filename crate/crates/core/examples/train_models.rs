//! Trains GCN, GAT and GraphSAGE on Gaussian blobs, then round-trips a
//! checkpoint and extracts hidden representations.
//!
//! `cargo run --release --example train_models`

use sea_core::dataset::synthetic_blobs;
use sea_core::gnn::{evaluate, extract_embeddings, fit, from_bytes, to_bytes, Arch, Layer, TrainConfig};

fn main() -> sea_core::Result<()> {
    let data = synthetic_blobs(300, 8, 3, 1.0, 1)?;
    let cfg = TrainConfig { epochs: 60, learning_rate: 0.01, ..TrainConfig::default() };
    for arch in Arch::ALL {
        let (model, trace) = fit(arch, &data, &cfg)?;
        let last = trace.last().unwrap();
        let test = evaluate(&model, &data, &data.split.test)?;
        println!(
            "{arch:>4}: {} parameters, final loss {:.4}, train {:.3}, test {test:.3}",
            model.num_parameters(),
            last.loss,
            last.train_accuracy
        );

        let restored = from_bytes(&to_bytes(&model)?)?;
        assert_eq!(restored, model);
        let hidden = extract_embeddings(&model, &data, Layer::Hidden)?;
        let logits = extract_embeddings(&model, &data, Layer::Logits)?;
        println!("      hidden {}x{}, logits {}x{}", hidden.n(), hidden.d(), logits.n(), logits.d());
    }
    Ok(())
}
