//! Binary checkpoint container.
//!
//! Layout: magic `CCSDCKPT`, u32 format version, u64 header length, header
//! JSON, u32 tensor count, then per tensor: u32 name length, UTF-8 name,
//! u32 rank, u64 per dimension, little-endian f64 values. All integers are
//! little-endian.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CcsdError, Result};
use crate::nn::{DataDims, ParamStore, ScoreModelSpec};
use crate::sde::RankSdes;

const PREFIXES: [&str; 3] = ["x", "a", "f"];
const MAGIC: &[u8; 8] = b"CCSDCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    /// Hash of the three network specs and data dimensions.
    pub spec_hash: String,
    pub models: [ScoreModelSpec; 3],
    pub dims: DataDims,
    pub sdes: RankSdes,
    pub seed: u64,
    pub epoch: usize,
    pub ema: bool,
}

/// Hex SHA-256 of the canonical JSON of the network specs and dimensions.
pub fn spec_hash(models: &[ScoreModelSpec; 3], dims: &DataDims) -> String {
    let json = serde_json::to_string(&(models, dims)).expect("specs serialize");
    hex::encode(Sha256::digest(json.as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<(String, Array2<f64>)>,
}

fn corrupt(msg: impl Into<String>) -> CcsdError {
    CcsdError::Checkpoint(msg.into())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| corrupt(format!("truncated: {e}")))?;
    Ok(b)
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&2u32.to_le_bytes());
            for d in t.shape() {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let magic: [u8; 8] = read_exact(&mut r)?;
        if &magic != MAGIC {
            return Err(corrupt("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(read_exact(&mut r)?);
        if version != FORMAT_VERSION {
            return Err(corrupt(format!("format version {version}, this build reads {FORMAT_VERSION}")));
        }
        let len = u64::from_le_bytes(read_exact(&mut r)?) as usize;
        if len > r.len() {
            return Err(corrupt("header longer than file"));
        }
        let header: CheckpointHeader =
            serde_json::from_slice(&r[..len]).map_err(|e| corrupt(format!("bad header: {e}")))?;
        r = &r[len..];
        if header.format_version != FORMAT_VERSION {
            return Err(corrupt(format!("header version {}", header.format_version)));
        }
        let count = u32::from_le_bytes(read_exact(&mut r)?);
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let nlen = u32::from_le_bytes(read_exact(&mut r)?) as usize;
            if nlen > r.len() {
                return Err(corrupt("tensor name longer than file"));
            }
            let name = String::from_utf8(r[..nlen].to_vec()).map_err(|_| corrupt("tensor name not UTF-8"))?;
            r = &r[nlen..];
            let rank = u32::from_le_bytes(read_exact(&mut r)?);
            if rank != 2 {
                return Err(corrupt(format!("tensor {name} has rank {rank}, expected 2")));
            }
            let rows = u64::from_le_bytes(read_exact(&mut r)?) as usize;
            let cols = u64::from_le_bytes(read_exact(&mut r)?) as usize;
            let total = rows.checked_mul(cols).ok_or_else(|| corrupt("tensor too large"))?;
            if total.checked_mul(8).is_none_or(|b| b > r.len()) {
                return Err(corrupt(format!("tensor {name} truncated")));
            }
            let values: Vec<f64> = r[..total * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            r = &r[total * 8..];
            let t = Array2::from_shape_vec((rows, cols), values).expect("length checked");
            tensors.push((name, t));
        }
        if !r.is_empty() {
            return Err(corrupt(format!("{} trailing bytes", r.len())));
        }
        Ok(Checkpoint { header, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| CcsdError::io(path, e))?;
        f.write_all(&bytes).map_err(|e| CcsdError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| CcsdError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Tensors named `x/..`, `a/..`, `f/..` after the network they belong to.
    pub fn from_stores(header: CheckpointHeader, stores: [&ParamStore; 3]) -> Self {
        let mut tensors = Vec::new();
        for (prefix, store) in PREFIXES.iter().zip(stores) {
            for (name, v) in store.iter() {
                tensors.push((format!("{prefix}/{name}"), v.clone()));
            }
        }
        Checkpoint { header, tensors }
    }

    /// Loads the tensors into stores built from the same specs.
    pub fn load_into(&self, stores: [&mut ParamStore; 3]) -> Result<()> {
        for (prefix, store) in PREFIXES.iter().zip(stores) {
            let lead = format!("{prefix}/");
            let entries = self
                .tensors
                .iter()
                .filter_map(|(n, v)| n.strip_prefix(&lead).map(|n| (n, v.clone())));
            store.load(entries)?;
        }
        let known = self
            .tensors
            .iter()
            .all(|(n, _)| PREFIXES.iter().any(|p| n.starts_with(&format!("{p}/"))));
        if !known {
            return Err(corrupt("checkpoint holds tensors of unknown networks"));
        }
        Ok(())
    }

    /// Refuses a checkpoint whose spec hash differs from the one expected.
    pub fn check_compatible(&self, models: &[ScoreModelSpec; 3], dims: &DataDims) -> Result<()> {
        let expected = spec_hash(models, dims);
        if self.header.spec_hash != expected {
            return Err(corrupt(format!(
                "spec hash {} does not match configuration {}",
                self.header.spec_hash, expected
            )));
        }
        if spec_hash(&self.header.models, &self.header.dims) != self.header.spec_hash {
            return Err(corrupt("header spec hash does not match its own specs"));
        }
        Ok(())
    }
}
