//! Weights file: a JSON header describing named tensors, followed by one
//! little-endian f64 payload.
//!
//! Layout: 8-byte LE header length, UTF-8 JSON header, then the payload.
//! Header: `{"meta": ..., "tensors": [{"name", "rows", "cols", "offset"}]}`
//! with byte offsets into the payload.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

pub fn write_weights(
    path: &Path,
    meta: &serde_json::Value,
    tensors: &[(String, &Tensor)],
) -> Result<()> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0usize;
    for (name, t) in tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            rows: t.rows(),
            cols: t.cols(),
            offset,
        });
        offset += t.len() * 8;
    }
    let header = Header {
        meta: meta.clone(),
        tensors: entries,
    };
    let header_bytes =
        serde_json::to_vec(&header).map_err(|e| Error::InvalidInput(e.to_string()))?;

    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut write = |bytes: &[u8]| -> Result<()> {
        file.write_all(bytes).map_err(|e| Error::io(path, e))
    };
    write(&(header_bytes.len() as u64).to_le_bytes())?;
    write(&header_bytes)?;
    for (_, t) in tensors {
        for v in t.data() {
            write(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_weights(path: &Path) -> Result<(serde_json::Value, Vec<(String, Tensor)>)> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)
        .map_err(|e| Error::io(path, e))?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)
        .map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::parse(path, 0, format!("weights header: {e}")))?;
    let mut payload = Vec::new();
    file.read_to_end(&mut payload)
        .map_err(|e| Error::io(path, e))?;

    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in header.tensors {
        let n = entry.rows * entry.cols;
        let end = entry.offset + n * 8;
        if end > payload.len() {
            return Err(Error::parse(
                path,
                0,
                format!("tensor {} extends past payload end", entry.name),
            ));
        }
        let mut data = Vec::with_capacity(n);
        for chunk in payload[entry.offset..end].chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().expect("8 bytes")));
        }
        tensors.push((entry.name, Tensor::from_vec(entry.rows, entry.cols, data)?));
    }
    Ok((header.meta, tensors))
}
