//! Triple scoring models, their parameters and hand-derived gradients.
//!
//! | kind      | score                                   |
//! |-----------|-----------------------------------------|
//! | TransE    | `-‖h + r - t‖` (L2 default, L1 option)  |
//! | DistMult  | `Σ h_i r_i t_i`                         |
//! | ComplEx   | `Re(Σ h_i r_i conj(t_i))`               |
//! | HolE      | `rᵀ (h ⋆ t)`                            |
//! | ER-MLP    | `A · relu(M · [h; r; t]) + b`           |
//! | ER-MLP-2d | `A · relu(M · ([h; t] + r)) + b`        |
//!
//! ComplEx rows store interleaved `(re, im)` pairs, so a `d`-dimensional
//! complex embedding occupies `2d` reals.

pub mod checkpoint;
pub mod holo;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Triple;
use crate::error::{Error, Result};

pub use holo::{circular_convolution, circular_correlation};

/// Smoothing constant of the TransE L2 norm gradient.
pub const TRANSE_GRAD_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "transe")]
    TransE,
    #[serde(rename = "distmult")]
    DistMult,
    #[serde(rename = "complex")]
    ComplEx,
    #[serde(rename = "hole")]
    HolE,
    #[serde(rename = "er-mlp")]
    ErMlp,
    #[serde(rename = "er-mlp-2d")]
    ErMlp2d,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::TransE,
        ModelKind::DistMult,
        ModelKind::ComplEx,
        ModelKind::HolE,
        ModelKind::ErMlp,
        ModelKind::ErMlp2d,
    ];

    pub fn is_mlp(self) -> bool {
        matches!(self, ModelKind::ErMlp | ModelKind::ErMlp2d)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TransE => "transe",
            ModelKind::DistMult => "distmult",
            ModelKind::ComplEx => "complex",
            ModelKind::HolE => "hole",
            ModelKind::ErMlp => "er-mlp",
            ModelKind::ErMlp2d => "er-mlp-2d",
        }
    }

    /// Display name as commonly written, e.g. `ER-MLP-2d`.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::TransE => "TransE",
            ModelKind::DistMult => "DistMult",
            ModelKind::ComplEx => "ComplEx",
            ModelKind::HolE => "HolE",
            ModelKind::ErMlp => "ER-MLP",
            ModelKind::ErMlp2d => "ER-MLP-2d",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "transe" => Ok(ModelKind::TransE),
            "distmult" => Ok(ModelKind::DistMult),
            "complex" => Ok(ModelKind::ComplEx),
            "hole" => Ok(ModelKind::HolE),
            "er-mlp" | "ermlp" => Ok(ModelKind::ErMlp),
            "er-mlp-2d" | "ermlp-2d" | "ermlp2d" => Ok(ModelKind::ErMlp2d),
            _ => Err(Error::Argument(format!("unknown model kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransENorm {
    L1,
    #[default]
    L2,
}

impl FromStr for TransENorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l1" => Ok(TransENorm::L1),
            "l2" => Ok(TransENorm::L2),
            _ => Err(Error::Argument(format!("unknown TransE norm `{s}`"))),
        }
    }
}

impl fmt::Display for TransENorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransENorm::L1 => "l1",
            TransENorm::L2 => "l2",
        })
    }
}

/// Model kind plus the sizes derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Entity embedding size `d`.
    pub dim: usize,
    /// Hidden layer size is `hidden_multiplier · d` (MLP kinds only).
    pub hidden_multiplier: usize,
    pub transe_norm: TransENorm,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, dim: usize) -> Self {
        ModelSpec {
            kind,
            dim,
            hidden_multiplier: 10,
            transe_norm: TransENorm::L2,
        }
    }

    pub fn with_hidden_multiplier(mut self, m: usize) -> Self {
        self.hidden_multiplier = m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Argument("embedding dimension must be positive".into()));
        }
        if self.kind.is_mlp() && self.hidden_multiplier == 0 {
            return Err(Error::Argument("hidden multiplier must be positive".into()));
        }
        Ok(())
    }

    /// Reals per entity row.
    pub fn entity_width(&self) -> usize {
        match self.kind {
            ModelKind::ComplEx => 2 * self.dim,
            _ => self.dim,
        }
    }

    /// Reals per relation row.
    pub fn relation_width(&self) -> usize {
        match self.kind {
            ModelKind::ComplEx | ModelKind::ErMlp2d => 2 * self.dim,
            _ => self.dim,
        }
    }

    /// Hidden units, zero for non-MLP kinds.
    pub fn hidden_size(&self) -> usize {
        if self.kind.is_mlp() {
            self.hidden_multiplier * self.dim
        } else {
            0
        }
    }

    /// Width of the MLP input vector, zero for non-MLP kinds.
    pub fn mlp_input_size(&self) -> usize {
        match self.kind {
            ModelKind::ErMlp => 3 * self.dim,
            ModelKind::ErMlp2d => 2 * self.dim,
            _ => 0,
        }
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Hidden weights `M` (H × input), output weights `A` (H) and bias `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub hidden: Matrix,
    pub out: Vec<f64>,
    pub bias: f64,
}

impl MlpParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        MlpParams {
            hidden: Matrix::zeros(hidden, input),
            out: vec![0.0; hidden],
            bias: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub entity: Matrix,
    pub relation: Matrix,
    pub mlp: Option<MlpParams>,
}

impl ModelParams {
    /// All-zero parameters with the shapes of `spec`.
    pub fn zeros(spec: &ModelSpec, num_entities: usize, num_relations: usize) -> Self {
        ModelParams {
            entity: Matrix::zeros(num_entities, spec.entity_width()),
            relation: Matrix::zeros(num_relations, spec.relation_width()),
            mlp: spec
                .kind
                .is_mlp()
                .then(|| MlpParams::zeros(spec.hidden_size(), spec.mlp_input_size())),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            entity: Matrix::zeros(self.entity.rows, self.entity.cols),
            relation: Matrix::zeros(self.relation.rows, self.relation.cols),
            mlp: self
                .mlp
                .as_ref()
                .map(|m| MlpParams::zeros(m.hidden.rows, m.hidden.cols)),
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entity.rows
    }

    pub fn num_relations(&self) -> usize {
        self.relation.rows
    }

    /// Total number of allocated reals.
    pub fn num_values(&self) -> usize {
        self.entity.data.len()
            + self.relation.data.len()
            + self
                .mlp
                .as_ref()
                .map_or(0, |m| m.hidden.data.len() + m.out.len() + 1)
    }

    pub fn all_finite(&self) -> bool {
        let mlp_ok = self.mlp.as_ref().is_none_or(|m| {
            m.bias.is_finite()
                && m.out.iter().all(|v| v.is_finite())
                && m.hidden.data.iter().all(|v| v.is_finite())
        });
        mlp_ok
            && self.entity.data.iter().all(|v| v.is_finite())
            && self.relation.data.iter().all(|v| v.is_finite())
    }

    /// Checks that the shapes agree with `spec`.
    pub fn check_shape(&self, spec: &ModelSpec) -> Result<()> {
        let want = ModelParams::zeros(spec, self.num_entities(), self.num_relations());
        let dims = |p: &ModelParams| {
            (
                p.entity.cols,
                p.relation.cols,
                p.mlp.as_ref().map(|m| (m.hidden.rows, m.hidden.cols, m.out.len())),
            )
        };
        if dims(self) != dims(&want) {
            return Err(Error::Shape(format!(
                "parameters {:?} do not match {} with d={}",
                dims(self),
                spec.kind,
                spec.dim
            )));
        }
        Ok(())
    }
}

fn xavier_fill<R: Rng>(values: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut R) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in values {
        *v = rng.gen_range(-bound..=bound);
    }
}

/// Embeddings uniform on [-1, 1]; MLP weights Xavier-uniform; bias 0.
/// Deterministic in `seed`.
pub fn init_params(spec: &ModelSpec, num_entities: usize, num_relations: usize, seed: u64) -> Result<ModelParams> {
    spec.validate()?;
    if num_entities == 0 || num_relations == 0 {
        return Err(Error::Argument(format!(
            "cannot initialise with N_e={num_entities}, N_r={num_relations}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::zeros(spec, num_entities, num_relations);
    for v in params
        .entity
        .data
        .iter_mut()
        .chain(params.relation.data.iter_mut())
    {
        *v = rng.gen_range(-1.0..=1.0);
    }
    if let Some(mlp) = params.mlp.as_mut() {
        let (h, i) = (mlp.hidden.rows, mlp.hidden.cols);
        xavier_fill(&mut mlp.hidden.data, i, h, &mut rng);
        xavier_fill(&mut mlp.out, h, 1, &mut rng);
        mlp.bias = 0.0;
    }
    Ok(params)
}

/// Parameter counts: the closed-form value and the allocated total.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    /// Closed form; omits the scalar output bias of the MLP kinds.
    pub formula: u64,
    /// Exact number of allocated reals.
    pub census: u64,
}

pub fn param_count(spec: &ModelSpec, num_entities: usize, num_relations: usize) -> ParamCount {
    let (ne, nr, d) = (num_entities as u64, num_relations as u64, spec.dim as u64);
    let hidden = spec.hidden_size() as u64;
    let formula = match spec.kind {
        ModelKind::TransE | ModelKind::DistMult | ModelKind::HolE => ne * d + nr * d,
        ModelKind::ComplEx => 2 * ne * d + 2 * nr * d,
        // with H = 10d: 30d² + 10d
        ModelKind::ErMlp => ne * d + nr * d + hidden * 3 * d + hidden,
        // with H = 10d: 20d² + 10d
        ModelKind::ErMlp2d => ne * d + 2 * nr * d + hidden * 2 * d + hidden,
    };
    let census = ne * spec.entity_width() as u64
        + nr * spec.relation_width() as u64
        + if spec.kind.is_mlp() {
            hidden * spec.mlp_input_size() as u64 + hidden + 1
        } else {
            0
        };
    ParamCount { formula, census }
}

fn check_triple(params: &ModelParams, t: &Triple) -> Result<()> {
    if t.h >= params.num_entities() || t.t >= params.num_entities() || t.r >= params.num_relations() {
        return Err(Error::Index(format!(
            "triple ({}, {}, {}) with N_e={}, N_r={}",
            t.h,
            t.r,
            t.t,
            params.num_entities(),
            params.num_relations()
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn complex_score(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    h.chunks_exact(2)
        .zip(r.chunks_exact(2))
        .zip(t.chunks_exact(2))
        .map(|((h, r), t)| {
            let (hr, hi, rr, ri, tr, ti) = (h[0], h[1], r[0], r[1], t[0], t[1]);
            hr * rr * tr - hi * ri * tr + hr * ri * ti + hi * rr * ti
        })
        .sum()
}

fn transe_score(norm: TransENorm, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let diffs = h.iter().zip(r).zip(t).map(|((h, r), t)| h + r - t);
    match norm {
        TransENorm::L2 => -diffs.map(|v| v * v).sum::<f64>().sqrt(),
        TransENorm::L1 => -diffs.map(f64::abs).sum::<f64>(),
    }
}

/// Builds the MLP input vector for `triple`.
fn mlp_input(spec: &ModelSpec, params: &ModelParams, triple: &Triple) -> Vec<f64> {
    let d = spec.dim;
    let h = params.entity.row(triple.h);
    let r = params.relation.row(triple.r);
    let t = params.entity.row(triple.t);
    match spec.kind {
        ModelKind::ErMlp => [h, r, t].concat(),
        ModelKind::ErMlp2d => {
            let mut x = [h, t].concat();
            debug_assert_eq!(r.len(), 2 * d);
            for (xi, ri) in x.iter_mut().zip(r) {
                *xi += ri;
            }
            x
        }
        _ => unreachable!("mlp_input on a non-MLP kind"),
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub triple: Triple,
    pub score: f64,
    mlp: Option<MlpCache>,
}

#[derive(Debug, Clone)]
struct MlpCache {
    input: Vec<f64>,
    pre_activation: Vec<f64>,
    /// Per-unit multiplier on the activation (dropout), if any.
    mask: Option<Vec<f64>>,
}

/// Evaluates `triple`. `dropout_mask` multiplies the hidden activations
/// and is only accepted for the MLP kinds.
pub fn forward(
    spec: &ModelSpec,
    params: &ModelParams,
    triple: &Triple,
    dropout_mask: Option<&[f64]>,
) -> Result<ForwardPass> {
    check_triple(params, triple)?;
    if dropout_mask.is_some() && !spec.kind.is_mlp() {
        return Err(Error::Argument(format!("dropout mask given for {}", spec.kind)));
    }
    let h = params.entity.row(triple.h);
    let r = params.relation.row(triple.r);
    let t = params.entity.row(triple.t);
    let (score, mlp) = match spec.kind {
        ModelKind::TransE => (transe_score(spec.transe_norm, h, r, t), None),
        ModelKind::DistMult => (h.iter().zip(r).zip(t).map(|((h, r), t)| h * r * t).sum(), None),
        ModelKind::ComplEx => (complex_score(h, r, t), None),
        ModelKind::HolE => (dot(r, &circular_correlation(h, t)?), None),
        ModelKind::ErMlp | ModelKind::ErMlp2d => {
            let mlp = params.mlp.as_ref().expect("MLP kind without MLP params");
            if let Some(m) = dropout_mask {
                if m.len() != mlp.out.len() {
                    return Err(Error::Shape(format!(
                        "dropout mask of length {} for {} hidden units",
                        m.len(),
                        mlp.out.len()
                    )));
                }
            }
            let input = mlp_input(spec, params, triple);
            let pre: Vec<f64> = (0..mlp.hidden.rows)
                .map(|k| dot(mlp.hidden.row(k), &input))
                .collect();
            let mut s = mlp.bias;
            for (k, &z) in pre.iter().enumerate() {
                if z > 0.0 {
                    let a = dropout_mask.map_or(z, |m| z * m[k]);
                    s += mlp.out[k] * a;
                }
            }
            (
                s,
                Some(MlpCache {
                    input,
                    pre_activation: pre,
                    mask: dropout_mask.map(<[f64]>::to_vec),
                }),
            )
        }
    };
    Ok(ForwardPass {
        triple: *triple,
        score,
        mlp,
    })
}

/// Score of a triple, no dropout.
pub fn score(spec: &ModelSpec, params: &ModelParams, triple: &Triple) -> Result<f64> {
    forward(spec, params, triple, None).map(|f| f.score)
}

/// Scores a list of triples.
pub fn score_batch(spec: &ModelSpec, params: &ModelParams, triples: &[Triple]) -> Result<Vec<f64>> {
    triples.iter().map(|t| score(spec, params, t)).collect()
}

/// Gradient rows keyed by row index.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    dim: usize,
    rows: HashMap<usize, Vec<f64>>,
}

impl SparseRows {
    pub fn new(dim: usize) -> Self {
        SparseRows {
            dim,
            rows: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize) -> Option<&[f64]> {
        self.rows.get(&row).map(Vec::as_slice)
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        let dim = self.dim;
        self.rows.entry(row).or_insert_with(|| vec![0.0; dim])
    }

    pub fn add(&mut self, row: usize, alpha: f64, x: &[f64]) {
        axpy(alpha, x, self.row_mut(row));
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    /// Touched row indices in ascending order.
    pub fn indices(&self) -> Vec<usize> {
        let mut keys: Vec<usize> = self.rows.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn merge(&mut self, other: &SparseRows) {
        for row in other.indices() {
            let x = &other.rows[&row];
            axpy(1.0, x, self.row_mut(row));
        }
    }
}

/// Gradient of some scalar with respect to the parameters it touched.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub entity: SparseRows,
    pub relation: SparseRows,
    /// Dense MLP gradient; present for the MLP kinds.
    pub mlp: Option<MlpParams>,
}

impl Gradients {
    pub fn new(spec: &ModelSpec) -> Self {
        Gradients {
            entity: SparseRows::new(spec.entity_width()),
            relation: SparseRows::new(spec.relation_width()),
            mlp: spec
                .kind
                .is_mlp()
                .then(|| MlpParams::zeros(spec.hidden_size(), spec.mlp_input_size())),
        }
    }

    pub fn merge(&mut self, other: &Gradients) {
        self.entity.merge(&other.entity);
        self.relation.merge(&other.relation);
        if let (Some(a), Some(b)) = (self.mlp.as_mut(), other.mlp.as_ref()) {
            axpy(1.0, &b.hidden.data, &mut a.hidden.data);
            axpy(1.0, &b.out, &mut a.out);
            a.bias += b.bias;
        }
    }
}

/// Adds `upstream · ∂score/∂θ` of the pass `fwd` into `grads`.
pub fn backward(spec: &ModelSpec, params: &ModelParams, fwd: &ForwardPass, upstream: f64, grads: &mut Gradients) {
    let tr = fwd.triple;
    let h = params.entity.row(tr.h);
    let r = params.relation.row(tr.r);
    let t = params.entity.row(tr.t);
    match spec.kind {
        ModelKind::TransE => {
            let v: Vec<f64> = h.iter().zip(r).zip(t).map(|((h, r), t)| h + r - t).collect();
            // ∂score/∂v
            let g: Vec<f64> = match spec.transe_norm {
                TransENorm::L2 => {
                    let n = (v.iter().map(|x| x * x).sum::<f64>() + TRANSE_GRAD_EPS * TRANSE_GRAD_EPS).sqrt();
                    v.iter().map(|x| -x / n).collect()
                }
                TransENorm::L1 => v
                    .iter()
                    .map(|&x| if x > 0.0 { -1.0 } else if x < 0.0 { 1.0 } else { 0.0 })
                    .collect(),
            };
            grads.entity.add(tr.h, upstream, &g);
            grads.relation.add(tr.r, upstream, &g);
            grads.entity.add(tr.t, -upstream, &g);
        }
        ModelKind::DistMult => {
            let dh: Vec<f64> = r.iter().zip(t).map(|(r, t)| r * t).collect();
            let dr: Vec<f64> = h.iter().zip(t).map(|(h, t)| h * t).collect();
            let dt: Vec<f64> = h.iter().zip(r).map(|(h, r)| h * r).collect();
            grads.entity.add(tr.h, upstream, &dh);
            grads.relation.add(tr.r, upstream, &dr);
            grads.entity.add(tr.t, upstream, &dt);
        }
        ModelKind::ComplEx => {
            let w = h.len();
            let (mut dh, mut dr, mut dt) = (vec![0.0; w], vec![0.0; w], vec![0.0; w]);
            for i in (0..w).step_by(2) {
                let (hr, hi, rr, ri, tre, ti) = (h[i], h[i + 1], r[i], r[i + 1], t[i], t[i + 1]);
                dh[i] = rr * tre + ri * ti;
                dh[i + 1] = rr * ti - ri * tre;
                dr[i] = hr * tre + hi * ti;
                dr[i + 1] = hr * ti - hi * tre;
                dt[i] = hr * rr - hi * ri;
                dt[i + 1] = hr * ri + hi * rr;
            }
            grads.entity.add(tr.h, upstream, &dh);
            grads.relation.add(tr.r, upstream, &dr);
            grads.entity.add(tr.t, upstream, &dt);
        }
        ModelKind::HolE => {
            let dr = circular_correlation(h, t).expect("equal widths");
            let dh = circular_correlation(r, t).expect("equal widths");
            let dt = circular_convolution(r, h).expect("equal widths");
            grads.entity.add(tr.h, upstream, &dh);
            grads.relation.add(tr.r, upstream, &dr);
            grads.entity.add(tr.t, upstream, &dt);
        }
        ModelKind::ErMlp | ModelKind::ErMlp2d => {
            let mlp = params.mlp.as_ref().expect("MLP kind without MLP params");
            let cache = fwd.mlp.as_ref().expect("MLP forward pass without cache");
            let g = grads.mlp.as_mut().expect("MLP kind without MLP gradient");
            g.bias += upstream;
            let mut dx = vec![0.0; cache.input.len()];
            for (k, &z) in cache.pre_activation.iter().enumerate() {
                if z <= 0.0 {
                    continue;
                }
                let m = cache.mask.as_ref().map_or(1.0, |m| m[k]);
                if m == 0.0 {
                    continue;
                }
                g.out[k] += upstream * z * m;
                let dz = upstream * mlp.out[k] * m;
                axpy(dz, &cache.input, g.hidden.row_mut(k));
                axpy(dz, mlp.hidden.row(k), &mut dx);
            }
            let d = spec.dim;
            match spec.kind {
                ModelKind::ErMlp => {
                    grads.entity.add(tr.h, 1.0, &dx[..d]);
                    grads.relation.add(tr.r, 1.0, &dx[d..2 * d]);
                    grads.entity.add(tr.t, 1.0, &dx[2 * d..]);
                }
                _ => {
                    grads.entity.add(tr.h, 1.0, &dx[..d]);
                    grads.entity.add(tr.t, 1.0, &dx[d..]);
                    grads.relation.add(tr.r, 1.0, &dx);
                }
            }
        }
    }
}

/// `upstream · ∂score/∂θ` for the parameters touched by `triple`. With a
/// dropout mask the gradient is that of the masked forward pass.
pub fn score_gradients(
    spec: &ModelSpec,
    params: &ModelParams,
    triple: &Triple,
    upstream: f64,
    dropout_mask: Option<&[f64]>,
) -> Result<Gradients> {
    let fwd = forward(spec, params, triple, dropout_mask)?;
    let mut grads = Gradients::new(spec);
    backward(spec, params, &fwd, upstream, &mut grads);
    Ok(grads)
}

/// Which end of a triple is being replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Head,
    Tail,
}

impl Side {
    pub fn replace(self, triple: &Triple, entity: usize) -> Triple {
        match self {
            Side::Head => Triple::new(entity, triple.r, triple.t),
            Side::Tail => Triple::new(triple.h, triple.r, entity),
        }
    }

    pub fn entity(self, triple: &Triple) -> usize {
        match self {
            Side::Head => triple.h,
            Side::Tail => triple.t,
        }
    }
}

/// Scores every entity as the replacement for one side of a triple.
///
/// Linear kinds reduce to one dot product per candidate. The MLP kinds
/// precompute the candidate-side block of `M` times every entity row, so a
/// candidate costs O(H) instead of O(H·d).
pub struct CandidateScorer<'a> {
    spec: ModelSpec,
    params: &'a ModelParams,
    side: Side,
    projections: Option<Matrix>,
}

impl<'a> CandidateScorer<'a> {
    pub fn new(spec: &ModelSpec, params: &'a ModelParams, side: Side) -> Self {
        let projections = params.mlp.as_ref().map(|mlp| {
            let d = spec.dim;
            let offset = match (spec.kind, side) {
                (_, Side::Head) => 0,
                (ModelKind::ErMlp, Side::Tail) => 2 * d,
                (_, Side::Tail) => d,
            };
            let hsz = mlp.hidden.rows;
            let mut proj = Matrix::zeros(params.num_entities(), hsz);
            for e in 0..params.num_entities() {
                let row = params.entity.row(e);
                let out = proj.row_mut(e);
                for (k, o) in out.iter_mut().enumerate() {
                    *o = dot(&mlp.hidden.row(k)[offset..offset + d], row);
                }
            }
            proj
        });
        CandidateScorer {
            spec: *spec,
            params,
            side,
            projections,
        }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    /// Writes into `out[e]` the score of `triple` with its `side` replaced by `e`.
    pub fn score_all(&self, triple: &Triple, out: &mut [f64]) -> Result<()> {
        let p = self.params;
        check_triple(p, triple)?;
        if out.len() != p.num_entities() {
            return Err(Error::Shape(format!(
                "candidate buffer of length {} for {} entities",
                out.len(),
                p.num_entities()
            )));
        }
        let h = p.entity.row(triple.h);
        let r = p.relation.row(triple.r);
        let t = p.entity.row(triple.t);
        let linear = |q: Vec<f64>, out: &mut [f64]| {
            for (e, o) in out.iter_mut().enumerate() {
                *o = dot(&q, p.entity.row(e));
            }
        };
        match (self.spec.kind, self.side) {
            (ModelKind::TransE, side) => {
                for (e, o) in out.iter_mut().enumerate() {
                    let c = p.entity.row(e);
                    *o = match side {
                        Side::Head => transe_score(self.spec.transe_norm, c, r, t),
                        Side::Tail => transe_score(self.spec.transe_norm, h, r, c),
                    };
                }
            }
            (ModelKind::DistMult, Side::Tail) => linear(h.iter().zip(r).map(|(a, b)| a * b).collect(), out),
            (ModelKind::DistMult, Side::Head) => linear(r.iter().zip(t).map(|(a, b)| a * b).collect(), out),
            (ModelKind::ComplEx, Side::Tail) => {
                let mut q = vec![0.0; h.len()];
                for i in (0..h.len()).step_by(2) {
                    q[i] = h[i] * r[i] - h[i + 1] * r[i + 1];
                    q[i + 1] = h[i] * r[i + 1] + h[i + 1] * r[i];
                }
                linear(q, out)
            }
            (ModelKind::ComplEx, Side::Head) => {
                let mut q = vec![0.0; t.len()];
                for i in (0..t.len()).step_by(2) {
                    q[i] = r[i] * t[i] + r[i + 1] * t[i + 1];
                    q[i + 1] = r[i] * t[i + 1] - r[i + 1] * t[i];
                }
                linear(q, out)
            }
            // r·(h ⋆ e) = e·(r ∗ h);  r·(e ⋆ t) = e·(r ⋆ t)
            (ModelKind::HolE, Side::Tail) => linear(circular_convolution(r, h)?, out),
            (ModelKind::HolE, Side::Head) => linear(circular_correlation(r, t)?, out),
            (ModelKind::ErMlp | ModelKind::ErMlp2d, side) => {
                let mlp = p.mlp.as_ref().expect("MLP kind without MLP params");
                let proj = self.projections.as_ref().expect("projections built for MLP kinds");
                let d = self.spec.dim;
                // fixed part of M·x
                let fixed: Vec<f64> = match (self.spec.kind, side) {
                    (ModelKind::ErMlp, Side::Tail) => {
                        let x = [h, r].concat();
                        (0..mlp.hidden.rows).map(|k| dot(&mlp.hidden.row(k)[..2 * d], &x)).collect()
                    }
                    (ModelKind::ErMlp, Side::Head) => {
                        let x = [r, t].concat();
                        (0..mlp.hidden.rows).map(|k| dot(&mlp.hidden.row(k)[d..], &x)).collect()
                    }
                    (_, Side::Tail) => {
                        let hr: Vec<f64> = h.iter().zip(&r[..d]).map(|(a, b)| a + b).collect();
                        (0..mlp.hidden.rows)
                            .map(|k| {
                                let row = mlp.hidden.row(k);
                                dot(&row[..d], &hr) + dot(&row[d..], &r[d..])
                            })
                            .collect()
                    }
                    (_, Side::Head) => {
                        let tr: Vec<f64> = t.iter().zip(&r[d..]).map(|(a, b)| a + b).collect();
                        (0..mlp.hidden.rows)
                            .map(|k| {
                                let row = mlp.hidden.row(k);
                                dot(&row[..d], &r[..d]) + dot(&row[d..], &tr)
                            })
                            .collect()
                    }
                };
                for (e, o) in out.iter_mut().enumerate() {
                    let pe = proj.row(e);
                    let mut s = mlp.bias;
                    for k in 0..fixed.len() {
                        let z = fixed[k] + pe[k];
                        if z > 0.0 {
                            s += mlp.out[k] * z;
                        }
                    }
                    *o = s;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
