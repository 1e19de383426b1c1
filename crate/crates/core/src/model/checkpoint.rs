//! Checkpoint files.
//!
//! Layout: one JSON header line terminated by `\n`, followed by
//! little-endian `f32` arrays in the order entity embeddings, relation
//! embeddings, MLP hidden weights, MLP output weights, MLP bias. Array
//! lengths follow from the header; the MLP arrays are empty for the
//! non-MLP kinds.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelKind, ModelParams, ModelSpec, TransENorm};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub kind: ModelKind,
    pub d: usize,
    pub hidden_multiplier: usize,
    #[serde(rename = "N_e")]
    pub num_entities: usize,
    #[serde(rename = "N_r")]
    pub num_relations: usize,
    pub seed: u64,
    #[serde(default)]
    pub transe_norm: TransENorm,
}

impl CheckpointHeader {
    pub fn new(spec: &ModelSpec, num_entities: usize, num_relations: usize, seed: u64) -> Self {
        CheckpointHeader {
            format_version: FORMAT_VERSION,
            kind: spec.kind,
            d: spec.dim,
            hidden_multiplier: spec.hidden_multiplier,
            num_entities,
            num_relations,
            seed,
            transe_norm: spec.transe_norm,
        }
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.kind,
            dim: self.d,
            hidden_multiplier: self.hidden_multiplier,
            transe_norm: self.transe_norm,
        }
    }
}

fn push_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Serializes `params` under `header`.
pub fn encode(header: &CheckpointHeader, params: &ModelParams) -> Result<Vec<u8>> {
    params.check_shape(&header.spec())?;
    if params.num_entities() != header.num_entities || params.num_relations() != header.num_relations {
        return Err(Error::Checkpoint(format!(
            "header says N_e={}, N_r={} but parameters have {} and {}",
            header.num_entities,
            header.num_relations,
            params.num_entities(),
            params.num_relations()
        )));
    }
    let mut out = serde_json::to_vec(header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    out.push(b'\n');
    out.reserve(4 * params.num_values());
    push_f32s(&mut out, params.entity.as_slice());
    push_f32s(&mut out, params.relation.as_slice());
    if let Some(m) = &params.mlp {
        push_f32s(&mut out, m.hidden.as_slice());
        push_f32s(&mut out, &m.out);
        push_f32s(&mut out, &[m.bias]);
    }
    Ok(out)
}

/// Parses a checkpoint produced by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<(CheckpointHeader, ModelParams)> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("missing header line".into()))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let spec = header.spec();
    spec.validate()?;
    let mut params = ModelParams::zeros(&spec, header.num_entities, header.num_relations);
    let body = &bytes[nl + 1..];
    if body.len() != 4 * params.num_values() {
        return Err(Error::Checkpoint(format!(
            "expected {} bytes of parameters, found {}",
            4 * params.num_values(),
            body.len()
        )));
    }
    let mut values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    let mut fill = |dst: &mut [f64]| {
        for v in dst {
            *v = values.next().expect("length checked above");
        }
    };
    fill(params.entity.as_mut_slice());
    fill(params.relation.as_mut_slice());
    if let Some(m) = params.mlp.as_mut() {
        fill(m.hidden.as_mut_slice());
        fill(&mut m.out);
        let mut b = [0.0];
        fill(&mut b);
        m.bias = b[0];
    }
    Ok((header, params))
}

pub fn write_checkpoint(path: &Path, header: &CheckpointHeader, params: &ModelParams) -> Result<()> {
    let bytes = encode(header, params)?;
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, ModelParams)> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}
