//! Model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "WMB1"                    magic
//! u32                       format version
//! u32 + bytes               JSON header: model config, optional optimizer info
//! u32                       manifest entry count
//!   u32 + bytes             parameter name (UTF-8)
//!   u32, u64 × rank         shape
//!   u64                     byte offset into the payload
//! u64 + bytes               payload of f32 values
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, WMamba};
use crate::nn::Module;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"WMB1";
pub const VERSION: u32 = 1;

/// Optimizer settings recorded for reproducibility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerInfo {
    pub name: String,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: Option<OptimizerInfo>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn save_checkpoint<T: Scalar>(model: &WMamba<T>, optimizer: Option<&OptimizerInfo>) -> Vec<u8> {
    let header = CheckpointHeader { model: model.config.clone(), optimizer: optimizer.cloned() };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let params = model.parameters();

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend(VERSION.to_le_bytes());
    out.extend((json.len() as u32).to_le_bytes());
    out.extend(&json);
    out.extend((params.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for p in &params {
        out.extend((p.name().len() as u32).to_le_bytes());
        out.extend(p.name().as_bytes());
        out.extend((p.value().rank() as u32).to_le_bytes());
        for &d in p.value().shape() {
            out.extend((d as u64).to_le_bytes());
        }
        out.extend(offset.to_le_bytes());
        offset += 4 * p.value().numel() as u64;
    }
    out.extend(offset.to_le_bytes());
    for p in &params {
        for v in p.value().data() {
            out.extend(v.to_f32().expect("finite parameter").to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad(format!("truncated while reading {what} at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Header and manifest, plus the payload slice.
pub fn read_layout(bytes: &[u8]) -> Result<(CheckpointHeader, Vec<ManifestEntry>, &[u8])> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic").ok() != Some(MAGIC.as_slice()) {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}, expected {VERSION}")));
    }
    let len = r.u32("header length")? as usize;
    let header: CheckpointHeader =
        serde_json::from_slice(r.take(len, "header")?).map_err(|e| bad(format!("invalid header: {e}")))?;
    let count = r.u32("manifest count")?;
    let mut manifest = Vec::new();
    for _ in 0..count {
        let n = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(n, "name")?).map_err(|_| bad("parameter name is not UTF-8"))?.to_string();
        let rank = r.u32("rank")?;
        if rank > 8 {
            return Err(bad(format!("`{name}` has implausible rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.u64("shape").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let offset = r.u64("offset")?;
        manifest.push(ManifestEntry { name, shape, offset });
    }
    let payload_len = r.u64("payload length")?;
    let payload = &bytes[r.pos..];
    if (payload.len() as u64) < payload_len {
        return Err(bad(format!("payload truncated: {} of {payload_len} bytes present", payload.len())));
    }
    Ok((header, manifest, &payload[..payload_len as usize]))
}

fn check_extents(manifest: &[ManifestEntry], payload_len: u64) -> Result<()> {
    let mut spans: Vec<(u64, u64, &str)> = Vec::new();
    for e in manifest {
        let bytes = e.shape.iter().try_fold(4u64, |acc, &d| acc.checked_mul(d as u64));
        let end = bytes.and_then(|b| e.offset.checked_add(b));
        match end {
            Some(end) if end <= payload_len => spans.push((e.offset, end, &e.name)),
            _ => return Err(bad(format!("`{}` extends past the {payload_len}-byte payload", e.name))),
        }
    }
    spans.sort();
    for w in spans.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(bad(format!("`{}` overlaps `{}` in the payload", w[0].2, w[1].2)));
        }
    }
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(WMamba<T>, CheckpointHeader)> {
    let (header, manifest, payload) = read_layout(bytes)?;
    check_extents(&manifest, payload.len() as u64)?;
    let mut model = WMamba::<T>::new(header.model.clone(), 0)?;

    let entries: HashMap<&str, &ManifestEntry> = manifest.iter().map(|e| (e.name.as_str(), e)).collect();
    if entries.len() != manifest.len() {
        return Err(bad("duplicate parameter names in manifest"));
    }
    let expected: BTreeSet<String> = model.parameters().iter().map(|p| p.name().to_string()).collect();
    let missing: Vec<&str> = expected.iter().map(String::as_str).filter(|n| !entries.contains_key(n)).collect();
    let mut extra: Vec<&str> = entries.keys().copied().filter(|n| !expected.contains(*n)).collect();
    extra.sort_unstable();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(bad(format!("parameter mismatch; missing: [{}]; unexpected: [{}]", missing.join(", "), extra.join(", "))));
    }

    let mut failure = None;
    model.visit_params_mut(&mut |p| {
        if failure.is_some() {
            return;
        }
        let e = entries[p.name()];
        if e.shape != p.value().shape() {
            failure = Some(bad(format!("`{}` stored as {:?}, config expects {:?}", e.name, e.shape, p.value().shape())));
            return;
        }
        let start = e.offset as usize;
        let data = payload[start..start + 4 * p.value().numel()]
            .chunks_exact(4)
            .map(|c| T::lit(f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes")))))
            .collect();
        p.set(Tensor::new(e.shape.clone(), data).expect("shape checked"));
    });
    match failure {
        Some(e) => Err(e),
        None => Ok((model, header)),
    }
}

pub fn write_checkpoint<T: Scalar>(path: impl AsRef<Path>, model: &WMamba<T>, optimizer: Option<&OptimizerInfo>) -> Result<()> {
    fs::write(path, save_checkpoint(model, optimizer))?;
    Ok(())
}

pub fn read_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<(WMamba<T>, CheckpointHeader)> {
    load_checkpoint(&fs::read(path)?)
}
