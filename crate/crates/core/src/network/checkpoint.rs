//! Binary checkpoint format for trained weights.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "RSEG4DN1"
//! version u32      currently 1
//! digest  u64      FNV-1a over the architecture JSON below
//! len     u32      architecture JSON length
//! json    len      architecture config, canonical serde_json encoding
//! count   u32      number of parameter tensors
//! per tensor:
//!   name_len u16, name bytes (UTF-8),
//!   value_count u64, values as f32 little-endian
//! ```
//!
//! Tensors appear in registration order and loading verifies names and
//! lengths, so a checkpoint only ever loads into the architecture that
//! wrote it.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::projection::ViewSpecs;

use super::model::Model;
use super::params::Parameters;
use super::tensor::Scalar;
use super::NetworkConfig;

const MAGIC: &[u8; 8] = b"RSEG4DN1";
const VERSION: u32 = 1;

/// Parsed checkpoint: the architecture plus named weight tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointData {
    pub config: NetworkConfig,
    pub tensors: Vec<(String, Vec<f32>)>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Serialize the architecture and all parameters to `path`.
pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    config: &NetworkConfig,
    params: &Parameters<T>,
) -> Result<()> {
    let bytes = checkpoint_bytes(config, params)?;
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))
}

/// The checkpoint encoding of an architecture and its parameters.
pub fn checkpoint_bytes<T: Scalar>(
    config: &NetworkConfig,
    params: &Parameters<T>,
) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(config)?;
    let mut out = Vec::with_capacity(64 + json.len() + params.total_len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&fnv1a(&json).to_le_bytes());
    out.extend_from_slice(&u32::try_from(json.len()).expect("config fits u32").to_le_bytes());
    out.extend_from_slice(&json);
    let count = u32::try_from(params.tensor_count()).expect("tensor count fits u32");
    out.extend_from_slice(&count.to_le_bytes());
    for (def, values) in params.iter() {
        let name = def.name.as_bytes();
        let name_len = u16::try_from(name.len()).expect("name fits u16");
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for &v in values {
            out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("file truncated".into()));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Read and validate a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<CheckpointData> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a checkpoint file (bad magic)",
            path.display()
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let digest = r.u64()?;
    let json_len = r.u32()? as usize;
    let json = r.take(json_len)?;
    if fnv1a(json) != digest {
        return Err(Error::Checkpoint(
            "architecture digest mismatch: file is corrupt".into(),
        ));
    }
    let config: NetworkConfig = serde_json::from_slice(json)
        .map_err(|e| Error::Checkpoint(format!("unreadable architecture block: {e}")))?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
        let value_count = r.u64()? as usize;
        let raw = r.take(value_count * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.push((name, values));
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after the last tensor",
            buf.len() - r.pos
        )));
    }
    Ok(CheckpointData { config, tensors })
}

impl<T: Scalar> Model<T> {
    /// Rebuild a model from a checkpoint, verifying the stored architecture
    /// against the heatmap geometry and loading every tensor by name.
    pub fn from_checkpoint(data: &CheckpointData, specs: &ViewSpecs) -> Result<Self> {
        let mut model = Model::new(data.config.clone(), specs, 0)?;
        model.params_mut().load_named(&data.tensors)?;
        Ok(model)
    }
}
