//! Inverse-relation audit of a dataset directory (`train.txt`, optional
//! `valid.txt`, `test.txt`), or of a generated leaky graph when no
//! directory is given.
//!
//! Usage: `cargo run --release --example audit_bias [DIR] [threshold]`

use std::path::PathBuf;

use kgbench::bias::{audit, DEFAULT_THRESHOLD};
use kgbench::data::{Dataset, DatasetPaths};
use kgbench::synthetic::{inverse_leakage_kg, LeakageKgConfig};

fn main() -> kgbench::Result<()> {
    let mut args = std::env::args().skip(1);
    let ds = match args.next() {
        Some(dir) => Dataset::load(&DatasetPaths::in_dir(&PathBuf::from(dir)))?,
        None => {
            println!("no dataset given; auditing a generated graph with 40 trivial test triples");
            let mut cfg = LeakageKgConfig::standard(0);
            cfg.num_test = 40;
            Dataset::from_raw(&inverse_leakage_kg(&cfg)?)?
        }
    };
    let threshold = args.next().and_then(|s| s.parse().ok()).unwrap_or(DEFAULT_THRESHOLD);
    let start = std::time::Instant::now();
    let report = audit(&ds.store.train, &ds.store.test, threshold)?;
    print!("{}", report.summary(Some(&ds.vocab)));
    println!("({} train, {} test, {:.2}s)", ds.store.train.len(), ds.store.test.len(), start.elapsed().as_secs_f64());
    Ok(())
}
