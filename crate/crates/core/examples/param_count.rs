//! Parameter counts at d = 100 and hidden size 10d for the WN18 and FB15K
//! vocabulary sizes.
//!
//! Usage: `cargo run --example param_count`

use kgbench::model::{param_count, ModelKind, ModelSpec};

fn main() {
    let datasets = [("WN18", 40_943, 18), ("FB15K", 14_951, 1_345)];
    println!("{:<10} {:>14} {:>14} {:>14} {:>14}", "model", "WN18 formula", "census", "FB15K formula", "census");
    for kind in ModelKind::ALL {
        let spec = ModelSpec::new(kind, 100);
        let counts: Vec<_> = datasets.iter().map(|&(_, ne, nr)| param_count(&spec, ne, nr)).collect();
        println!(
            "{:<10} {:>14} {:>14} {:>14} {:>14}",
            kind.label(),
            counts[0].formula,
            counts[0].census,
            counts[1].formula,
            counts[1].census
        );
    }
}
