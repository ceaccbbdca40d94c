//! Loads a Cora-format dataset, draws a split and writes the binary cache.
//!
//! `cargo run --release --example load_cora -- path/to/cora [planetoid|random|random:T,V]`

use std::path::PathBuf;

use sea_core::dataset::{load_cache, load_cora_with_stats, make_split, save_cache, SplitStrategy};

fn main() -> sea_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "data/cora".into()));
    let strategy: SplitStrategy = args.next().map(|s| s.parse()).transpose()?.unwrap_or_default();

    let (data, stats) = load_cora_with_stats(&dir.join("cora.content"), &dir.join("cora.cites"))?;
    println!("{} nodes, {} features, {} classes", data.n(), data.features.d(), data.num_classes);
    println!("classes: {}", data.class_names.join(", "));
    println!(
        "{} citation rows: {} self, {} merged, {} unknown -> {} undirected edges",
        stats.raw_citations, stats.self_citations, stats.merged_citations, stats.unknown_citations, stats.edges
    );

    let split = make_split(data.n(), &data.labels, strategy, 0)?;
    let data = data.with_split(split)?;
    println!(
        "split {strategy:?}: train {}, val {}, test {}",
        data.split.train_indices().len(),
        data.split.val_indices().len(),
        data.split.test_indices().len()
    );

    let cache = std::env::temp_dir().join("cora.seadset");
    save_cache(&data, &cache)?;
    assert_eq!(load_cache(&cache)?, data);
    println!("cache {} ({} bytes)", cache.display(), std::fs::metadata(&cache).map(|m| m.len()).unwrap_or(0));
    Ok(())
}
