//! Binary dataset cache.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes   "SEADSET\0"
//! version   u32
//! length    u64       payload byte count
//! sha256    32 bytes  digest of the payload
//! payload:
//!   header_len u32, header JSON {name, n, d, num_classes, class_names, edges}
//!   features   n*d f64, row-major
//!   labels     n u32
//!   edges      edges * (p u32, q u32, w f64)
//!   masks      3n bytes (train, val, test), 0 or 1
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Dataset, Split};
use crate::error::{Result, SeaError};
use crate::knn::FeatureMatrix;
use crate::sparse::WeightedGraph;

pub const CACHE_MAGIC: [u8; 8] = *b"SEADSET\0";
pub const CACHE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    name: String,
    n: usize,
    d: usize,
    num_classes: usize,
    class_names: Vec<String>,
    edges: usize,
}

pub fn save_cache(data: &Dataset, path: &Path) -> Result<()> {
    let header = Header {
        name: data.name.clone(),
        n: data.n(),
        d: data.features.d(),
        num_classes: data.num_classes,
        class_names: data.class_names.clone(),
        edges: data.graph.num_edges(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut payload = Vec::new();
    payload.extend_from_slice(&(json.len() as u32).to_le_bytes());
    payload.extend_from_slice(&json);
    for v in data.features.as_array().iter() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    for &l in &data.labels {
        payload.extend_from_slice(&(l as u32).to_le_bytes());
    }
    for e in data.graph.edges() {
        payload.extend_from_slice(&(e.p as u32).to_le_bytes());
        payload.extend_from_slice(&(e.q as u32).to_le_bytes());
        payload.extend_from_slice(&e.w.to_le_bytes());
    }
    for mask in [&data.split.train, &data.split.val, &data.split.test] {
        payload.extend(mask.iter().map(|&m| m as u8));
    }
    let mut out = Vec::with_capacity(payload.len() + 52);
    out.extend_from_slice(&CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&payload));
    out.extend_from_slice(&payload);
    fs::write(path, out).map_err(|e| SeaError::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated"))?;
        let bytes = &self.buf[self.pos..end];
        self.pos = end;
        Ok(bytes)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn corrupt(reason: &str) -> SeaError {
    SeaError::Cache(reason.into())
}

pub fn load_cache(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| SeaError::io(path, e))?;
    let mut r = Reader { buf: &bytes, pos: 0 };
    if r.take(8)? != CACHE_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != CACHE_VERSION {
        return Err(SeaError::Cache(format!("unsupported version {version}")));
    }
    let len = r.u64()? as usize;
    let digest = r.take(32)?;
    let payload = r.take(len)?;
    if Sha256::digest(payload)[..] != *digest {
        return Err(corrupt("checksum mismatch"));
    }
    let mut p = Reader { buf: payload, pos: 0 };
    let header_len = p.u32()? as usize;
    let header: Header = serde_json::from_slice(p.take(header_len)?)?;
    let (n, d) = (header.n, header.d);
    let features = (0..n * d).map(|_| p.f64()).collect::<Result<Vec<_>>>()?;
    let labels = (0..n).map(|_| p.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let mut triples = Vec::with_capacity(header.edges);
    for _ in 0..header.edges {
        triples.push((p.u32()? as usize, p.u32()? as usize, p.f64()?));
    }
    let mut masks = Vec::with_capacity(3);
    for _ in 0..3 {
        masks.push(p.take(n)?.iter().map(|&b| b != 0).collect::<Vec<bool>>());
    }
    let test = masks.pop().expect("three masks");
    let val = masks.pop().expect("three masks");
    let train = masks.pop().expect("three masks");
    let features =
        FeatureMatrix::new(Array2::from_shape_vec((n, d), features).map_err(|e| SeaError::Cache(e.to_string()))?)?;
    Dataset::new(
        header.name,
        WeightedGraph::new(n, triples)?,
        features,
        labels,
        header.num_classes,
        Split { train, val, test },
        header.class_names,
    )
}
