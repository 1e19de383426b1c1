//! Trains ER-MLP on a generated graph where every test triple is the exact
//! inverse of a train triple, and reports filtered metrics before and after.
//!
//! Usage: `cargo run --release --example synthetic_leakage [epochs] [batch] [lr] [weight_decay] [dropout] [negatives] [model]`

use kgbench::data::Dataset;
use kgbench::eval::{evaluate, Protocol};
use kgbench::model::{init_params, ModelKind, ModelSpec};
use kgbench::synthetic::{inverse_leakage_kg, LeakageKgConfig};
use kgbench::train::{train_with, TrainConfig};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> kgbench::Result<()> {
    let ds = Dataset::from_raw(&inverse_leakage_kg(&LeakageKgConfig::standard(0))?)?;
    let kind: ModelKind = arg(7, ModelKind::ErMlp);
    let spec = ModelSpec::new(kind, 32);
    let cfg = TrainConfig {
        epochs: arg(1, 300),
        batch_size: arg(2, 100),
        learning_rate: arg(3, 0.001),
        weight_decay: arg(4, 0.0),
        dropout_p: arg(5, 0.0),
        negatives_per_positive: arg(6, 1),
        ..TrainConfig::default()
    };
    let (ne, nr) = (ds.store.num_entities(), ds.store.num_relations());
    let untrained = init_params(&spec, ne, nr, cfg.seed)?;
    let before = evaluate(&spec, &untrained, &ds.store.test, ds.store.known(), Protocol::Filtered)?;
    println!("untrained: Hits@10 {:.3}  MRR {:.3}", before.hits10, before.mrr);

    let start = std::time::Instant::now();
    let out = train_with(&spec, &ds.store, &cfg, |rec, params| {
        if rec.epoch % 25 == 0 {
            let r = evaluate(&spec, params, &ds.store.test, ds.store.known(), Protocol::Filtered)?;
            println!("epoch {:4}  loss {:.4}  Hits@10 {:.3}  MRR {:.3}", rec.epoch, rec.loss, r.hits10, r.mrr);
        }
        Ok(())
    })?;
    let after = evaluate(&spec, &out.params, &ds.store.test, ds.store.known(), Protocol::Filtered)?;
    println!(
        "trained:   Hits@10 {:.3}  MRR {:.3}  ({:.1}s)",
        after.hits10,
        after.mrr,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
