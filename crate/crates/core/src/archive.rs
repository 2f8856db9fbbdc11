//! Single-file tensor container with a JSON header and a SHA-256 trailer.
//!
//! Layout: `MAGIC | u64 LE header length | header JSON | raw little-endian
//! tensor data | sha256(everything before)`. Tensors are written in name
//! order, so equal contents always serialize to identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"S2PARCH1";
const DIGEST_LEN: usize = 32;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct TensorArchive {
    pub meta: serde_json::Value,
    pub tensors: BTreeMap<String, Tensor>,
}

fn dtype_name(dtype: DType) -> Result<&'static str> {
    match dtype {
        DType::F32 => Ok("f32"),
        DType::F64 => Ok("f64"),
        DType::U32 => Ok("u32"),
        other => Err(Error::Argument(format!(
            "unsupported archive dtype {other:?}"
        ))),
    }
}

fn tensor_bytes(t: &Tensor) -> Result<Vec<u8>> {
    let flat = t.flatten_all()?;
    Ok(match t.dtype() {
        DType::F32 => flat
            .to_vec1::<f32>()?
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect(),
        DType::F64 => flat
            .to_vec1::<f64>()?
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect(),
        DType::U32 => flat
            .to_vec1::<u32>()?
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect(),
        other => {
            return Err(Error::Argument(format!(
                "unsupported archive dtype {other:?}"
            )))
        }
    })
}

fn tensor_from_bytes(entry: &TensorEntry, bytes: &[u8], device: &Device) -> Result<Tensor> {
    let bad = |reason: &str| Error::integrity(format!("tensor {}", entry.name), reason.to_string());
    let n: usize = entry.shape.iter().product();
    let t = match entry.dtype.as_str() {
        "f32" | "u32" if bytes.len() != 4 * n => {
            return Err(bad("byte length does not match shape"))
        }
        "f64" if bytes.len() != 8 * n => return Err(bad("byte length does not match shape")),
        "f32" => Tensor::from_vec(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect::<Vec<_>>(),
            entry.shape.as_slice(),
            device,
        )?,
        "f64" => Tensor::from_vec(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect::<Vec<_>>(),
            entry.shape.as_slice(),
            device,
        )?,
        "u32" => Tensor::from_vec(
            bytes
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect::<Vec<_>>(),
            entry.shape.as_slice(),
            device,
        )?,
        _ => return Err(bad("unknown dtype")),
    };
    Ok(t)
}

impl TensorArchive {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            tensors: BTreeMap::new(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut data = Vec::new();
        for (name, t) in &self.tensors {
            let dtype = dtype_name(t.dtype())?;
            let bytes = tensor_bytes(t)?;
            entries.push(TensorEntry {
                name: name.clone(),
                dtype: dtype.to_string(),
                shape: t.dims().to_vec(),
                offset: data.len(),
                len: bytes.len(),
            });
            data.extend_from_slice(&bytes);
        }
        let header = serde_json::to_vec(&Header {
            meta: self.meta.clone(),
            tensors: entries,
        })?;
        let mut out = Vec::with_capacity(MAGIC.len() + 8 + header.len() + data.len() + DIGEST_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&data);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], device: &Device) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 + DIGEST_LEN || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::integrity("magic", "not a tensor archive"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::integrity("checksum", "file is corrupt or truncated"));
        }
        let header_len =
            u64::from_le_bytes(body[MAGIC.len()..MAGIC.len() + 8].try_into().unwrap()) as usize;
        let header_start = MAGIC.len() + 8;
        let data_start = header_start
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| Error::integrity("header", "header length out of bounds"))?;
        let header: Header = serde_json::from_slice(&body[header_start..data_start])
            .map_err(|e| Error::integrity("header", e.to_string()))?;
        let data = &body[data_start..];
        let mut tensors = BTreeMap::new();
        for entry in &header.tensors {
            let end = entry
                .offset
                .checked_add(entry.len)
                .filter(|&e| e <= data.len())
                .ok_or_else(|| {
                    Error::integrity(format!("tensor {}", entry.name), "data out of bounds")
                })?;
            let t = tensor_from_bytes(entry, &data[entry.offset..end], device)?;
            tensors.insert(entry.name.clone(), t);
        }
        Ok(Self {
            meta: header.meta,
            tensors,
        })
    }

    /// Writes via a temporary sibling file and rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp)
            .map_err(|e| Error::io(format!("creating {}", tmp.display()), e))?;
        f.write_all(&bytes)
            .and_then(|_| f.sync_all())
            .map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
    }

    pub fn load(path: &Path, device: &Device) -> Result<Self> {
        let bytes =
            fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes, device)
    }
}

/// Hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
