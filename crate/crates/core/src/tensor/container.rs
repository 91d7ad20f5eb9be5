//! Parameter container: a single file holding a JSON manifest followed by
//! raw little-endian `f32` arrays.
//!
//! Byte layout:
//!
//! ```text
//! offset  size  content
//! 0       8     magic b"CEP3PRM\0"
//! 8       4     manifest length M, u32 little-endian
//! 12      M     manifest, UTF-8 JSON (see `ContainerManifest`)
//! 12+M    ...   concatenated arrays, each rows*cols f32 LE values in row-major
//!               order, in manifest order; entry `offset` is relative to 12+M
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ParameterSet, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 8] = b"CEP3PRM\0";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainerEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub dtype: String,
    /// Byte offset of the array within the data section.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainerManifest {
    pub seed: u64,
    pub entries: Vec<ContainerEntry>,
    /// Free-form metadata, e.g. the model configuration.
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn write_container<T: Real, W: Write>(mut out: W, params: &ParameterSet<T>, meta: serde_json::Value) -> Result<()> {
    let mut entries = Vec::with_capacity(params.len());
    let mut offset = 0;
    for (_, name, value) in params.iter() {
        entries.push(ContainerEntry { name: name.to_string(), shape: value.shape(), dtype: "f32".into(), offset });
        offset += value.len() * 4;
    }
    let manifest = serde_json::to_vec(&ContainerManifest { seed: params.seed(), entries, meta })?;
    out.write_all(MAGIC)?;
    out.write_all(&(manifest.len() as u32).to_le_bytes())?;
    out.write_all(&manifest)?;
    for (_, _, value) in params.iter() {
        for &x in value.data() {
            out.write_all(&(x.as_f64() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads only the manifest at the front of a container.
pub fn read_manifest(bytes: &[u8]) -> Result<ContainerManifest> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Container("bad magic".into()));
    }
    let len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    let manifest = bytes.get(12..12 + len).ok_or_else(|| Error::Container("truncated manifest".into()))?;
    Ok(serde_json::from_slice(manifest)?)
}

/// Loads values into `params`, matching entries by name and shape.
pub fn read_container<T: Real, R: Read>(mut input: R, params: &mut ParameterSet<T>) -> Result<ContainerManifest> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Container("bad magic".into()));
    }
    let mut len = [0u8; 4];
    input.read_exact(&mut len)?;
    let mut manifest = vec![0u8; u32::from_le_bytes(len) as usize];
    input.read_exact(&mut manifest)?;
    let manifest: ContainerManifest = serde_json::from_slice(&manifest)?;
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    for entry in &manifest.entries {
        if entry.dtype != "f32" {
            return Err(Error::Container(format!("{}: unsupported dtype {}", entry.name, entry.dtype)));
        }
        let id = params.id(&entry.name).ok_or_else(|| Error::Container(format!("unknown parameter {}", entry.name)))?;
        let [r, c] = entry.shape;
        let bytes = data
            .get(entry.offset..entry.offset + r * c * 4)
            .ok_or_else(|| Error::Container(format!("{}: truncated data", entry.name)))?;
        let values = bytes
            .chunks_exact(4)
            .map(|b| T::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        params.set(id, Tensor::from_vec(r, c, values)?)?;
    }
    if manifest.entries.len() != params.len() {
        return Err(Error::Container(format!("{} entries for {} parameters", manifest.entries.len(), params.len())));
    }
    Ok(manifest)
}
