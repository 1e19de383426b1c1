//! Central finite-difference checks of the analytic gradients.
//!
//! Only forward evaluations are used on the numeric side: each touched
//! coordinate is nudged by `±step` and the score (or batch loss) is
//! re-evaluated.

use crate::data::Triple;
use crate::error::Result;
use crate::model::{self, Gradients, ModelParams, ModelSpec};
use crate::train::{self, LabeledBatch};

/// One coordinate of [`ModelParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    Entity(usize, usize),
    Relation(usize, usize),
    Hidden(usize, usize),
    Out(usize),
    Bias,
}

fn value_mut(params: &mut ModelParams, c: Coord) -> &mut f64 {
    match c {
        Coord::Entity(r, j) => &mut params.entity.row_mut(r)[j],
        Coord::Relation(r, j) => &mut params.relation.row_mut(r)[j],
        Coord::Hidden(k, j) => &mut params.mlp.as_mut().expect("mlp").hidden.row_mut(k)[j],
        Coord::Out(k) => &mut params.mlp.as_mut().expect("mlp").out[k],
        Coord::Bias => &mut params.mlp.as_mut().expect("mlp").bias,
    }
}

/// Analytic gradient value at `c`; rows absent from the sparse set are zero.
pub fn gradient_at(grads: &Gradients, c: Coord) -> f64 {
    match c {
        Coord::Entity(r, j) => grads.entity.get(r).map_or(0.0, |row| row[j]),
        Coord::Relation(r, j) => grads.relation.get(r).map_or(0.0, |row| row[j]),
        Coord::Hidden(k, j) => grads.mlp.as_ref().map_or(0.0, |m| m.hidden.row(k)[j]),
        Coord::Out(k) => grads.mlp.as_ref().map_or(0.0, |m| m.out[k]),
        Coord::Bias => grads.mlp.as_ref().map_or(0.0, |m| m.bias),
    }
}

/// Every coordinate a set of triples can influence.
pub fn touched_coords(params: &ModelParams, triples: &[Triple]) -> Vec<Coord> {
    let mut ents: Vec<usize> = triples.iter().flat_map(|t| [t.h, t.t]).collect();
    ents.sort_unstable();
    ents.dedup();
    let mut rels: Vec<usize> = triples.iter().map(|t| t.r).collect();
    rels.sort_unstable();
    rels.dedup();
    let mut out = Vec::new();
    for e in ents {
        out.extend((0..params.entity.cols()).map(|j| Coord::Entity(e, j)));
    }
    for r in rels {
        out.extend((0..params.relation.cols()).map(|j| Coord::Relation(r, j)));
    }
    if let Some(m) = &params.mlp {
        for k in 0..m.hidden.rows() {
            out.extend((0..m.hidden.cols()).map(|j| Coord::Hidden(k, j)));
            out.push(Coord::Out(k));
        }
        out.push(Coord::Bias);
    }
    out
}

/// Outcome of a gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// `max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub coords: usize,
}

fn compare<F>(params: &ModelParams, coords: &[Coord], analytic: &Gradients, step: f64, mut f: F) -> Result<GradCheck>
where
    F: FnMut(&ModelParams) -> Result<f64>,
{
    let mut work = params.clone();
    let mut max_abs = 0.0f64;
    let mut scale = 0.0f64;
    for &c in coords {
        let orig = *value_mut(&mut work, c);
        *value_mut(&mut work, c) = orig + step;
        let up = f(&work)?;
        *value_mut(&mut work, c) = orig - step;
        let down = f(&work)?;
        *value_mut(&mut work, c) = orig;
        let numeric = (up - down) / (2.0 * step);
        let a = gradient_at(analytic, c);
        max_abs = max_abs.max((a - numeric).abs());
        scale = scale.max(a.abs()).max(numeric.abs());
    }
    Ok(GradCheck {
        max_rel_error: if scale > 0.0 { max_abs / scale } else { 0.0 },
        max_abs_error: max_abs,
        coords: coords.len(),
    })
}

/// Checks `∂score/∂θ` for one triple, optionally under a fixed dropout mask.
pub fn check_score_gradients(
    spec: &ModelSpec,
    params: &ModelParams,
    triple: &Triple,
    dropout_mask: Option<&[f64]>,
    step: f64,
) -> Result<GradCheck> {
    let analytic = model::score_gradients(spec, params, triple, 1.0, dropout_mask)?;
    let coords = touched_coords(params, std::slice::from_ref(triple));
    compare(params, &coords, &analytic, step, |p| {
        model::forward(spec, p, triple, dropout_mask).map(|f| f.score)
    })
}

/// Checks the gradient of the summed cross-entropy batch loss (no dropout).
pub fn check_loss_gradients(
    spec: &ModelSpec,
    params: &ModelParams,
    batch: &LabeledBatch,
    weight_decay: f64,
    step: f64,
) -> Result<GradCheck> {
    let (_, analytic) = train::batch_loss_and_grads(spec, params, batch, None, weight_decay)?;
    let coords = touched_coords(params, &batch.triples);
    compare(params, &coords, &analytic, step, |p| {
        train::batch_loss(spec, p, batch, weight_decay)
    })
}
