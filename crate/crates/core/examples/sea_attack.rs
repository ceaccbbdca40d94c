//! Spectral attack against the random baseline for all three architectures
//! on a synthetic dataset, printed as a comparison table.
//!
//! `cargo run --release --example sea_attack -- [evasion|poisoning]`

use sea_core::attack::{compare, write_comparison_csv, AttackMode, Attacker, SeaConfig};
use sea_core::dataset::synthetic_blobs;
use sea_core::gnn::{Arch, TrainConfig};

fn main() -> sea_core::Result<()> {
    let mode: AttackMode = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or_default();
    let data = synthetic_blobs(600, 16, 5, 2.5, 4)?;
    let cfg = SeaConfig {
        k: 20,
        s: 10,
        mode,
        train: TrainConfig { epochs: 40, learning_rate: 0.01, ..TrainConfig::default() },
        ..SeaConfig::default()
    };
    let attacker = Attacker::new(&data, cfg)?;
    println!("{} edges, input kNN graph {} edges", data.graph.num_edges(), attacker.input_graph()?.num_edges());

    let mut rows = Vec::new();
    for arch in Arch::ALL {
        let model = attacker.train(arch)?;
        let sea = attacker.sea(&model)?;
        let random = attacker.random(&model, 10)?;
        println!(
            "{arch:>4}: {} edges reweighted, top score {:.3}, sea {:+.2} pp, random {:+.2} pp",
            sea.report.edges_attacked, sea.selected[0].score, sea.report.degradation_pp, random.summary.degradation_pp
        );
        rows.push(compare(&sea.report, &random.summary)?);
    }
    write_comparison_csv(std::io::stdout().lock(), &rows)
}
