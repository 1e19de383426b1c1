//! Compares analytic gradients with central finite differences for every
//! model kind, on single scores and on a labeled batch.
//!
//! Usage: `cargo run --example gradient_check`

use kgbench::data::Triple;
use kgbench::gradcheck::{check_loss_gradients, check_score_gradients};
use kgbench::model::{init_params, ModelKind, ModelSpec};
use kgbench::train::{dropout_mask, LabeledBatch};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> kgbench::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch = LabeledBatch {
        triples: vec![Triple::new(0, 0, 1), Triple::new(1, 1, 2), Triple::new(2, 0, 0), Triple::new(0, 1, 0)],
        labels: vec![1, 0, 1, 0],
    };
    println!("{:<10} {:>4} {:>12} {:>12} {:>12}", "model", "d", "score", "masked", "loss");
    for kind in ModelKind::ALL {
        for d in [2, 6, 17] {
            let spec = ModelSpec::new(kind, d);
            let params = init_params(&spec, 3, 2, d as u64)?;
            let plain = check_score_gradients(&spec, &params, &batch.triples[1], None, 1e-5)?;
            let masked = if kind.is_mlp() {
                let mask = dropout_mask(&mut rng, spec.hidden_size(), 0.5);
                let c = check_score_gradients(&spec, &params, &batch.triples[1], Some(&mask), 1e-5)?;
                format!("{:.2e}", c.max_rel_error)
            } else {
                "-".into()
            };
            let loss = check_loss_gradients(&spec, &params, &batch, 0.01, 1e-5)?;
            println!(
                "{:<10} {:>4} {:>12.2e} {:>12} {:>12.2e}",
                kind.label(),
                d,
                plain.max_rel_error,
                masked,
                loss.max_rel_error
            );
        }
    }
    Ok(())
}
