//! Single-file model container.
//!
//! ```text
//! b"MLKD1" | header length: u64 LE | JSON header | f64 LE parameter data
//! ```
//!
//! The header lists every parameter's name, shape, frozen flag and element
//! offset into the data section, plus free-form metadata.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Param, TrackerModel};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"MLKD1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    params: Vec<ParamEntry>,
    #[serde(default)]
    metadata: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    frozen: bool,
    offset: usize,
}

pub fn to_bytes(model: &TrackerModel, metadata: serde_json::Value) -> Result<Vec<u8>> {
    let mut offset = 0;
    let params = model
        .params
        .iter()
        .map(|p| {
            let e = ParamEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                frozen: p.frozen,
                offset,
            };
            offset += p.value.numel();
            e
        })
        .collect();
    let header = serde_json::to_vec(&Header { params, metadata })?;
    let mut out = Vec::with_capacity(MAGIC.len() + 8 + header.len() + offset * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for p in &model.params {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<(TrackerModel, serde_json::Value)> {
    let corrupt = |msg: String| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("missing MLKD1 magic".into()));
    }
    let mut len_bytes = [0u8; 8];
    len_bytes.copy_from_slice(&bytes[MAGIC.len()..MAGIC.len() + 8]);
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let data_start = MAGIC.len() + 8 + header_len;
    if bytes.len() < data_start {
        return Err(corrupt("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[MAGIC.len() + 8..data_start])
        .map_err(|e| corrupt(format!("bad header: {e}")))?;
    let data = &bytes[data_start..];
    if data.len() % 8 != 0 {
        return Err(corrupt("data section is not a whole number of f64 values".into()));
    }
    let values: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut params = Vec::with_capacity(header.params.len());
    let mut expected_offset = 0;
    for e in header.params {
        let n: usize = e.shape.iter().product();
        if e.offset != expected_offset || e.offset + n > values.len() {
            return Err(corrupt(format!("parameter `{}` lies outside the data section", e.name)));
        }
        let value = Tensor::new(&e.shape, values[e.offset..e.offset + n].to_vec())
            .map_err(|err| corrupt(err.to_string()))?;
        expected_offset += n;
        params.push(Param {
            name: e.name,
            value,
            frozen: e.frozen,
        });
    }
    if expected_offset != values.len() {
        return Err(corrupt(format!(
            "{} trailing values after the last parameter",
            values.len() - expected_offset
        )));
    }
    let model = TrackerModel::from_params(params).map_err(|e| corrupt(e.to_string()))?;
    Ok((model, header.metadata))
}

/// Writes atomically: the file appears complete or not at all.
pub fn save(path: &Path, model: &TrackerModel, metadata: serde_json::Value) -> Result<()> {
    let bytes = to_bytes(model, metadata)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(TrackerModel, serde_json::Value)> {
    let bytes = fs::read(path).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    from_bytes(&bytes, path)
}
