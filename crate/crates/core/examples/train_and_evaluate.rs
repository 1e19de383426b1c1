//! Trains a model on a dataset directory, writes a checkpoint, reads it
//! back and evaluates the test split with both ranking protocols.
//!
//! Usage: `cargo run --release --example train_and_evaluate [DIR] [model] [dim] [epochs]`
//!
//! Without a directory a small generated graph is used.

use std::path::PathBuf;

use kgbench::data::{Dataset, DatasetPaths};
use kgbench::eval::{evaluate, Protocol};
use kgbench::model::checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader};
use kgbench::model::{ModelKind, ModelSpec};
use kgbench::synthetic::{inverse_leakage_kg, LeakageKgConfig};
use kgbench::train::{train_with, TrainConfig};

fn main() -> kgbench::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let ds = match args.first().filter(|a| a.as_str() != "-") {
        Some(dir) => Dataset::load(&DatasetPaths::in_dir(&PathBuf::from(dir)))?,
        None => Dataset::from_raw(&inverse_leakage_kg(&LeakageKgConfig {
            num_entities: 60,
            num_train: 300,
            num_test: 30,
            num_valid: 30,
            seed: 1,
        })?)?,
    };
    let kind: ModelKind = args.get(1).map_or(Ok(ModelKind::ComplEx), |s| s.parse())?;
    let dim = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(16);
    let spec = ModelSpec::new(kind, dim);
    let cfg = TrainConfig {
        batch_size: 100,
        learning_rate: 0.01,
        epochs: args.get(3).and_then(|s| s.parse().ok()).unwrap_or(50),
        eval_every: 10,
        ..TrainConfig::default()
    };
    let out = train_with(&spec, &ds.store, &cfg, |rec, _| {
        if let Some(mrr) = rec.valid_mrr {
            println!("epoch {:4}  loss {:.4}  valid MRR {mrr:.3}", rec.epoch, rec.loss);
        }
        Ok(())
    })?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.kgb");
    let header = CheckpointHeader::new(&spec, ds.store.num_entities(), ds.store.num_relations(), cfg.seed);
    write_checkpoint(&path, &header, &out.params)?;
    let (header, params) = read_checkpoint(&path)?;
    println!("checkpoint: {} bytes, {} {}", std::fs::metadata(&path)?.len(), header.kind.label(), header.d);

    for protocol in [Protocol::Filtered, Protocol::Raw] {
        let r = evaluate(&header.spec(), &params, &ds.store.test, ds.store.known(), protocol)?;
        println!(
            "{protocol:<8}  Hits@1 {:.3}  Hits@3 {:.3}  Hits@10 {:.3}  MR {:.1}  MRR {:.3}",
            r.hits1, r.hits3, r.hits10, r.mr, r.mrr
        );
    }
    Ok(())
}
