//! Negative sampling, cross-entropy loss, Adam and the epoch loop.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{compute_relation_stats, RelationStats, Triple, TripleStore};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Protocol};
use crate::model::{self, init_params, Gradients, ModelParams, ModelSpec};

/// Resampling attempts for a corruption that hits a known triple.
pub const MAX_RESAMPLE: usize = 10;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Triples per gradient work unit. Fixed so that results do not depend on
/// the number of threads.
const CHUNK: usize = 256;

/// Positives (label 1) interleaved with their corruptions (label 0).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledBatch {
    pub triples: Vec<Triple>,
    pub labels: Vec<u8>,
}

impl LabeledBatch {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn push(&mut self, triple: Triple, label: u8) {
        self.triples.push(triple);
        self.labels.push(label);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Drop probability on the hidden layer of the MLP kinds.
    pub dropout_p: f64,
    pub negatives_per_positive: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Validation MRR every this many epochs; 0 disables it.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 10_000,
            learning_rate: 0.001,
            weight_decay: 0.001,
            dropout_p: 0.5,
            negatives_per_positive: 1,
            epochs: 100,
            seed: 0,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay {} must be non-negative", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p {} outside [0, 1)", self.dropout_p));
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive must be at least 1".into());
        }
        Ok(())
    }
}

/// For each positive, `k` corruptions: the head is replaced with
/// probability `p_corrupt_head(r)`, else the tail. The replacement is
/// uniform over the other `N_e - 1` entities. A corruption found in `known`
/// is redrawn up to [`MAX_RESAMPLE`] times and then kept.
pub fn sample_negatives<R: Rng + ?Sized>(
    positives: &[Triple],
    stats: &RelationStats,
    known: &HashSet<Triple>,
    k: usize,
    num_entities: usize,
    rng: &mut R,
) -> Result<LabeledBatch> {
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    if num_entities < 2 {
        return Err(Error::Argument("corruption needs at least two entities".into()));
    }
    let mut batch = LabeledBatch {
        triples: Vec::with_capacity(positives.len() * (k + 1)),
        labels: Vec::with_capacity(positives.len() * (k + 1)),
    };
    for pos in positives {
        batch.push(*pos, 1);
        let p_head = stats.p_corrupt_head(pos.r);
        for _ in 0..k {
            let corrupt_head = rng.gen::<f64>() < p_head;
            let original = if corrupt_head { pos.h } else { pos.t };
            let draw = |rng: &mut R| {
                let mut e = rng.gen_range(0..num_entities - 1);
                if e >= original {
                    e += 1;
                }
                if corrupt_head {
                    Triple::new(e, pos.r, pos.t)
                } else {
                    Triple::new(pos.h, pos.r, e)
                }
            };
            let mut neg = draw(rng);
            let mut tries = 0;
            while tries < MAX_RESAMPLE && known.contains(&neg) {
                neg = draw(rng);
                tries += 1;
            }
            batch.push(neg, 0);
        }
    }
    Ok(batch)
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cross-entropy of one score against a {0, 1} label.
pub fn cross_entropy(score: f64, label: u8) -> f64 {
    if label == 1 {
        softplus(-score)
    } else {
        softplus(score)
    }
}

fn weight_decay_term(params: &ModelParams, weight_decay: f64) -> f64 {
    params.mlp.as_ref().map_or(0.0, |m| {
        let sq: f64 = m.hidden.as_slice().iter().chain(&m.out).map(|v| v * v).sum();
        0.5 * weight_decay * sq
    })
}

/// Inverted dropout on the hidden layer; masks are drawn from `seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub p: f64,
    pub seed: u64,
}

/// Multipliers for one hidden layer: `1/(1-p)` with probability `1-p`,
/// else 0.
pub fn dropout_mask<R: Rng + ?Sized>(rng: &mut R, units: usize, p: f64) -> Vec<f64> {
    let keep = 1.0 - p;
    (0..units)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect()
}

/// Summed cross-entropy over the batch plus `weight_decay/2 · ‖W‖²` over
/// the MLP weight matrices, and its gradient.
pub fn batch_loss_and_grads(
    spec: &ModelSpec,
    params: &ModelParams,
    batch: &LabeledBatch,
    dropout: Option<Dropout>,
    weight_decay: f64,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    if batch.triples.len() != batch.labels.len() {
        return Err(Error::Shape("triples and labels differ in length".into()));
    }
    let dropout = dropout.filter(|d| spec.kind.is_mlp() && d.p > 0.0);
    let hidden = spec.hidden_size();
    let partials: Vec<(f64, Gradients)> = batch
        .triples
        .par_chunks(CHUNK)
        .zip(batch.labels.par_chunks(CHUNK))
        .enumerate()
        .map(|(c, (triples, labels))| {
            let mut rng = dropout.map(|d| {
                let mut r = ChaCha8Rng::seed_from_u64(d.seed);
                r.set_stream(c as u64);
                r
            });
            let mut grads = Gradients::new(spec);
            let mut loss = 0.0;
            for (i, (t, &y)) in triples.iter().zip(labels).enumerate() {
                let mask = match (&mut rng, dropout) {
                    (Some(r), Some(d)) => Some(dropout_mask(r, hidden, d.p)),
                    _ => None,
                };
                let fwd = model::forward(spec, params, t, mask.as_deref())?;
                if !fwd.score.is_finite() {
                    return Err(Error::Numeric { index: c * CHUNK + i });
                }
                loss += cross_entropy(fwd.score, y);
                model::backward(spec, params, &fwd, sigmoid(fwd.score) - y as f64, &mut grads);
            }
            Ok((loss, grads))
        })
        .collect::<Result<_>>()?;

    let mut loss = weight_decay_term(params, weight_decay);
    let mut grads = Gradients::new(spec);
    for (l, g) in &partials {
        loss += l;
        grads.merge(g);
    }
    if weight_decay > 0.0 {
        if let (Some(g), Some(m)) = (grads.mlp.as_mut(), params.mlp.as_ref()) {
            for (gv, pv) in g.hidden.as_mut_slice().iter_mut().zip(m.hidden.as_slice()) {
                *gv += weight_decay * pv;
            }
            for (gv, pv) in g.out.iter_mut().zip(&m.out) {
                *gv += weight_decay * pv;
            }
        }
    }
    Ok((loss, grads))
}

/// Loss only, without dropout.
pub fn batch_loss(spec: &ModelSpec, params: &ModelParams, batch: &LabeledBatch, weight_decay: f64) -> Result<f64> {
    let mut loss = weight_decay_term(params, weight_decay);
    for (i, (t, &y)) in batch.triples.iter().zip(&batch.labels).enumerate() {
        let s = model::score(spec, params, t)?;
        if !s.is_finite() {
            return Err(Error::Numeric { index: i });
        }
        loss += cross_entropy(s, y);
    }
    Ok(loss)
}

/// First and second moments shaped like the parameters, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

#[inline]
fn adam_update(p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], lr: f64, c1: f64, c2: f64) {
    for i in 0..p.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// One Adam step. Embedding rows without a gradient keep their moments
/// untouched; the MLP block is updated densely.
pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.entity.dim() != params.entity.cols()
        || grads.relation.dim() != params.relation.cols()
        || grads.mlp.is_some() != params.mlp.is_some()
        || state.m.num_values() != params.num_values()
    {
        return Err(Error::Shape("gradient or optimizer state does not match parameters".into()));
    }
    if let (Some(g), Some(p)) = (&grads.mlp, &params.mlp) {
        if g.hidden.rows() != p.hidden.rows() || g.hidden.cols() != p.hidden.cols() {
            return Err(Error::Shape("MLP gradient does not match parameters".into()));
        }
    }
    let bad_row = grads.entity.iter().any(|(r, _)| r >= params.num_entities())
        || grads.relation.iter().any(|(r, _)| r >= params.num_relations());
    if bad_row {
        return Err(Error::Shape("gradient row outside the parameter matrix".into()));
    }

    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - ADAM_BETA1.powf(t);
    let c2 = 1.0 - ADAM_BETA2.powf(t);
    for (row, g) in grads.entity.iter() {
        adam_update(
            params.entity.row_mut(row),
            state.m.entity.row_mut(row),
            state.v.entity.row_mut(row),
            g,
            lr,
            c1,
            c2,
        );
    }
    for (row, g) in grads.relation.iter() {
        adam_update(
            params.relation.row_mut(row),
            state.m.relation.row_mut(row),
            state.v.relation.row_mut(row),
            g,
            lr,
            c1,
            c2,
        );
    }
    if let (Some(g), Some(p), Some(m), Some(v)) = (
        grads.mlp.as_ref(),
        params.mlp.as_mut(),
        state.m.mlp.as_mut(),
        state.v.mlp.as_mut(),
    ) {
        adam_update(
            p.hidden.as_mut_slice(),
            m.hidden.as_mut_slice(),
            v.hidden.as_mut_slice(),
            g.hidden.as_slice(),
            lr,
            c1,
            c2,
        );
        adam_update(&mut p.out, &mut m.out, &mut v.out, &g.out, lr, c1, c2);
        let (mut pb, mut mb, mut vb) = ([p.bias], [m.bias], [v.bias]);
        adam_update(&mut pb, &mut mb, &mut vb, &[g.bias], lr, c1, c2);
        (p.bias, m.bias, v.bias) = (pb[0], mb[0], vb[0]);
    }
    Ok(())
}

/// One line of training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss per labeled triple over the epoch.
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub valid_mrr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
}

pub fn train(spec: &ModelSpec, store: &TripleStore, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(spec, store, config, |_, _| Ok(()))
}

/// Runs the epoch loop, calling `observer` after every epoch.
///
/// Parameters are initialised from `config.seed`; shuffling, negative
/// sampling and dropout draw from a separate stream of the same seed, so
/// the whole run is a function of the seed.
pub fn train_with<F>(spec: &ModelSpec, store: &TripleStore, config: &TrainConfig, mut observer: F) -> Result<TrainOutcome>
where
    F: FnMut(&EpochRecord, &ModelParams) -> Result<()>,
{
    config.validate()?;
    if store.train.is_empty() {
        return Err(Error::Argument("train split is empty".into()));
    }
    let mut params = init_params(spec, store.num_entities(), store.num_relations(), config.seed)?;
    let stats = compute_relation_stats(store)?;
    let train_set: HashSet<Triple> = store.train.iter().copied().collect();
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..store.train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut count) = (0.0, 0usize);
        for idx in order.chunks(config.batch_size) {
            let positives: Vec<Triple> = idx.iter().map(|&i| store.train[i]).collect();
            let batch = sample_negatives(
                &positives,
                &stats,
                &train_set,
                config.negatives_per_positive,
                store.num_entities(),
                &mut rng,
            )?;
            let dropout = Dropout {
                p: config.dropout_p,
                seed: rng.gen(),
            };
            let (loss, grads) = batch_loss_and_grads(spec, &params, &batch, Some(dropout), config.weight_decay)?;
            adam_step(&mut params, &grads, &mut state, config.learning_rate)?;
            total += loss;
            count += batch.len();
        }
        let valid_mrr = if config.eval_every > 0 && epoch % config.eval_every == 0 && !store.valid.is_empty() {
            Some(evaluate(spec, &params, &store.valid, store.known(), Protocol::Filtered)?.mrr)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            loss: total / count as f64,
            valid_mrr,
        };
        log::debug!("epoch {epoch}: loss {:.6}", record.loss);
        observer(&record, &params)?;
        history.push(record);
    }
    Ok(TrainOutcome { params, history })
}
