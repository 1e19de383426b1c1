//! Trains all six model kinds on the same generated leaky graph and prints
//! a comparison table (filtered Hits@10, MR, MRR).
//!
//! Usage: `cargo run --release --example compare_models [epochs]`

use kgbench::data::Dataset;
use kgbench::eval::{compare_reports, evaluate, ComparisonRow, Protocol};
use kgbench::model::{ModelKind, ModelSpec};
use kgbench::synthetic::{inverse_leakage_kg, LeakageKgConfig};
use kgbench::train::{train, TrainConfig};

fn main() -> kgbench::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let ds = Dataset::from_raw(&inverse_leakage_kg(&LeakageKgConfig::standard(0))?)?;
    let cfg = TrainConfig {
        batch_size: 100,
        learning_rate: 0.01,
        weight_decay: 0.1,
        dropout_p: 0.2,
        epochs,
        ..TrainConfig::default()
    };
    let mut reports = Vec::new();
    for kind in ModelKind::ALL {
        let spec = ModelSpec::new(kind, 32);
        let start = std::time::Instant::now();
        let out = train(&spec, &ds.store, &cfg)?;
        let report = evaluate(&spec, &out.params, &ds.store.test, ds.store.known(), Protocol::Filtered)?;
        eprintln!("{} trained in {:.1}s", kind.label(), start.elapsed().as_secs_f64());
        reports.push((kind, report));
    }
    let rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|(kind, report)| ComparisonRow {
            model: kind.label(),
            dataset: "leaky-synthetic",
            report,
        })
        .collect();
    print!("{}", compare_reports(&rows)?);
    Ok(())
}
