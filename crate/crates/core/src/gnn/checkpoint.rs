//! Model checkpoints.
//!
//! Layout, little-endian:
//!
//! ```text
//! magic        8 bytes  "SEAGNN\0\0"
//! version      u32
//! header_len   u32
//! header       JSON {arch, input_dim, classes, dropout, params: [{name, rows, cols}], batch_norm}
//! values       f64 for every parameter in header order, row-major,
//!              then running mean and running variance when batch_norm is set
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::model::{Arch, BatchNormStats, GnnModel};
use crate::error::{Result, SeaError};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"SEAGNN\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamShape {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct BatchNormHeader {
    width: usize,
    momentum: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arch: Arch,
    input_dim: usize,
    classes: usize,
    dropout: f64,
    params: Vec<ParamShape>,
    batch_norm: Option<BatchNormHeader>,
}

pub fn to_bytes(model: &GnnModel) -> Result<Vec<u8>> {
    let header = Header {
        arch: model.arch,
        input_dim: model.input_dim,
        classes: model.classes,
        dropout: model.dropout,
        params: model
            .arch
            .param_names()
            .iter()
            .zip(&model.params)
            .map(|(name, p)| ParamShape { name: name.to_string(), rows: p.nrows(), cols: p.ncols() })
            .collect(),
        batch_norm: model.bn.as_ref().map(|b| BatchNormHeader { width: b.mean.len(), momentum: b.momentum }),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
    for p in &model.params {
        p.iter().copied().for_each(&mut put);
    }
    if let Some(bn) = &model.bn {
        bn.mean.iter().copied().for_each(&mut put);
        bn.var.iter().copied().for_each(&mut put);
    }
    Ok(out)
}

fn bad(reason: impl Into<String>) -> SeaError {
    SeaError::Checkpoint(reason.into())
}

pub fn from_bytes(bytes: &[u8]) -> Result<GnnModel> {
    if bytes.len() < 16 || bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body_start = 16 + header_len;
    if bytes.len() < body_start {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&bytes[16..body_start])?;
    let mut values = bytes[body_start..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    if (bytes.len() - body_start) % 8 != 0 {
        return Err(bad("trailing bytes"));
    }
    let mut take = |count: usize| -> Result<Vec<f64>> {
        let v: Vec<f64> = values.by_ref().take(count).collect();
        if v.len() != count {
            return Err(bad("truncated values"));
        }
        Ok(v)
    };
    let names = header.arch.param_names();
    if header.params.len() != names.len() || header.params.iter().zip(names).any(|(p, n)| p.name != *n) {
        return Err(bad(format!("parameter list does not match {}", header.arch)));
    }
    let mut params = Vec::with_capacity(names.len());
    for shape in &header.params {
        let data = take(shape.rows * shape.cols)?;
        params.push(Array2::from_shape_vec((shape.rows, shape.cols), data).map_err(|e| bad(e.to_string()))?);
    }
    let bn = match &header.batch_norm {
        Some(h) => Some(BatchNormStats {
            mean: Array1::from_vec(take(h.width)?),
            var: Array1::from_vec(take(h.width)?),
            momentum: h.momentum,
        }),
        None => None,
    };
    if values.next().is_some() {
        return Err(bad("trailing values"));
    }
    let model = GnnModel {
        arch: header.arch,
        input_dim: header.input_dim,
        classes: header.classes,
        dropout: header.dropout,
        params,
        bn,
    };
    let reference = GnnModel::new(model.arch, model.input_dim, model.classes, 0)?;
    if reference.params.iter().zip(&model.params).any(|(a, b)| a.dim() != b.dim()) {
        return Err(bad("parameter shapes do not match the architecture"));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &GnnModel, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)?).map_err(|e| SeaError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<GnnModel> {
    from_bytes(&fs::read(path).map_err(|e| SeaError::io(path, e))?)
}
