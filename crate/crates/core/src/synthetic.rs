//! Generated knowledge graphs with a known amount of inverse-relation
//! leakage.
//!
//! Every generated fact is an entity pair `{a, b}` stored as `(a, r, b)`
//! and its exact inverse `(b, r_inv, a)`. "Full" pairs put both triples in
//! train. "Leaked" pairs put one of the two triples in train and the other
//! in test (or valid), so every test triple is trivial.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{RawSplits, RawTriple};
use crate::error::{Error, Result};

pub const RELATION: &str = "r";
pub const INVERSE_RELATION: &str = "r_inv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeakageKgConfig {
    pub num_entities: usize,
    pub num_train: usize,
    /// Trivial test triples.
    pub num_test: usize,
    /// Trivial validation triples.
    pub num_valid: usize,
    pub seed: u64,
}

impl LeakageKgConfig {
    /// 200 entities, 2000 train triples, 200 trivial test triples.
    pub fn standard(seed: u64) -> Self {
        LeakageKgConfig {
            num_entities: 200,
            num_train: 2000,
            num_test: 200,
            num_valid: 0,
            seed,
        }
    }
}

pub fn entity_name(i: usize) -> String {
    format!("e{i:04}")
}

pub fn inverse_leakage_kg(cfg: &LeakageKgConfig) -> Result<RawSplits> {
    let leaked = cfg.num_test + cfg.num_valid;
    if cfg.num_train < leaked || !(cfg.num_train - leaked).is_multiple_of(2) {
        return Err(Error::Argument(format!(
            "num_train - num_test - num_valid must be even and non-negative (got {}, {}, {})",
            cfg.num_train, cfg.num_test, cfg.num_valid
        )));
    }
    let full = (cfg.num_train - leaked) / 2;
    let pairs_needed = full + leaked;
    let n = cfg.num_entities;
    if n < 2 || pairs_needed > n * (n - 1) / 2 {
        return Err(Error::Argument(format!(
            "{pairs_needed} distinct pairs do not fit in {n} entities"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seen = HashSet::new();
    let mut pairs = Vec::with_capacity(pairs_needed);
    while pairs.len() < pairs_needed {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b || !seen.insert((a.min(b), a.max(b))) {
            continue;
        }
        pairs.push((a, b));
    }
    let fwd = |(a, b): (usize, usize)| RawTriple::new(&entity_name(a), RELATION, &entity_name(b));
    let inv = |(a, b): (usize, usize)| RawTriple::new(&entity_name(b), INVERSE_RELATION, &entity_name(a));

    let mut splits = RawSplits::default();
    for &p in &pairs[..full] {
        splits.train.push(fwd(p));
        splits.train.push(inv(p));
    }
    for (i, &p) in pairs[full..].iter().enumerate() {
        // alternate which direction leaks so both relations appear in test
        let (kept, held) = if i % 2 == 0 { (inv(p), fwd(p)) } else { (fwd(p), inv(p)) };
        splits.train.push(kept);
        if i < cfg.num_test {
            splits.test.push(held);
        } else {
            splits.valid.push(held);
        }
    }
    Ok(splits)
}
