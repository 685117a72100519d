//! Checkpoint container: a JSON header (names, shapes, seed, config hash,
//! plus caller metadata) followed by the flat little-endian f64 parameter
//! data in header order.

use super::{ParamStore, Parameter};
use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"VADCKPT1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub params: Vec<ParamEntry>,
    /// Caller metadata (vocabulary, label set, resolved config, ...).
    pub extra: serde_json::Value,
}

pub fn save_checkpoint(
    path: &Path,
    store: &ParamStore,
    seed: u64,
    config_hash: &str,
    extra: serde_json::Value,
) -> Result<()> {
    let mut params = Vec::with_capacity(store.len());
    let mut offset = 0usize;
    for p in store.iter() {
        params.push(ParamEntry {
            name: p.name.clone(),
            shape: p.shape.clone(),
            offset,
        });
        offset += p.data.len();
    }
    let header = CheckpointHeader {
        version: 1,
        seed,
        config_hash: config_hash.to_string(),
        params,
        extra,
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| CoreError::Schema(format!("checkpoint header serialisation: {e}")))?;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for p in store.iter() {
        for &v in &p.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, ParamStore)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CoreError::Schema(format!(
            "not a checkpoint file: bad magic {magic:?}"
        )));
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| CoreError::Schema(format!("checkpoint header parse: {e}")))?;

    let mut store = ParamStore::new();
    for entry in &header.params {
        let n: usize = entry.shape.iter().product();
        let mut data = vec![0.0f64; n];
        let mut buf = [0u8; 8];
        for v in &mut data {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        store.params.push(Parameter {
            name: entry.name.clone(),
            shape: entry.shape.clone(),
            grad: vec![0.0; n],
            data,
        });
    }
    Ok((header, store))
}
