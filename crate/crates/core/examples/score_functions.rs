//! Scores one hand-built triple under each of the six model kinds.
//!
//! Usage: `cargo run --example score_functions`

use kgbench::data::Triple;
use kgbench::model::holo::circular_correlation;
use kgbench::model::{forward, init_params, score, ModelKind, ModelParams, ModelSpec};

fn main() -> kgbench::Result<()> {
    let t = Triple::new(0, 0, 1);

    // Linear models on 2-dimensional vectors, set by hand.
    let set = |kind, h: &[f64], r: &[f64], tail: &[f64]| -> kgbench::Result<f64> {
        let spec = ModelSpec::new(kind, 2);
        let mut p = ModelParams::zeros(&spec, 2, 1);
        p.entity.row_mut(0).copy_from_slice(h);
        p.relation.row_mut(0).copy_from_slice(r);
        p.entity.row_mut(1).copy_from_slice(tail);
        // adding 0.0 turns a -0.0 distance into 0
        Ok(score(&spec, &p, &t)? + 0.0)
    };
    println!("TransE   h=(1,0) r=(0,1) t=(1,1): {}", set(ModelKind::TransE, &[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0])?);
    println!("DistMult h=(1,2) r=(3,1) t=(1,1): {}", set(ModelKind::DistMult, &[1.0, 2.0], &[3.0, 1.0], &[1.0, 1.0])?);
    println!("HolE     h=(1,0) r=(0,1) t=(1,0): {}", set(ModelKind::HolE, &[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0])?);
    println!("  (1,0) ⋆ (1,0) = {:?}", circular_correlation(&[1.0, 0.0], &[1.0, 0.0])?);

    // ComplEx rows interleave (re, im): h = 1+2i, r = 3, t = 5.
    let spec = ModelSpec::new(ModelKind::ComplEx, 1);
    let mut p = ModelParams::zeros(&spec, 2, 1);
    p.entity.row_mut(0).copy_from_slice(&[1.0, 2.0]);
    p.relation.row_mut(0).copy_from_slice(&[3.0, 0.0]);
    p.entity.row_mut(1).copy_from_slice(&[5.0, 0.0]);
    println!("ComplEx  h=1+2i r=3 t=5: {}", score(&spec, &p, &t)?);

    // The MLP kinds from a random initialisation.
    for kind in [ModelKind::ErMlp, ModelKind::ErMlp2d] {
        let spec = ModelSpec::new(kind, 8);
        let p = init_params(&spec, 2, 1, 0)?;
        let f = forward(&spec, &p, &t, None)?;
        println!(
            "{:<9} d=8 hidden={} input={}: {:.4}",
            kind.label(),
            spec.hidden_size(),
            spec.mlp_input_size(),
            f.score
        );
    }
    Ok(())
}
