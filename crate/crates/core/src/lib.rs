//! Knowledge-graph embedding models (TransE, DistMult, ComplEx, HolE, ER-MLP,
//! ER-MLP-2d) with training, filtered link-prediction evaluation and an
//! inverse-relation leakage audit.
//!
//! The runnable programs under `examples/` walk through each capability;
//! the `kgbench` binary exposes the same pipeline on the command line.

pub mod bias;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
