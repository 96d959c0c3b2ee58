//! Versioned checkpoint container.
//!
//! Layout: 4-byte magic "SPKM", u32 LE format version, u64 LE header
//! length, a JSON header (config, metadata, optimizer hyperparameters, blob
//! directory), then the blobs as little-endian f32 runs concatenated in
//! directory order. Tensors are stored at 32-bit precision: one save/load
//! cycle rounds parameters to the f32 grid, after which round-trips are
//! exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::snn::{Network, NetworkConfig};
use crate::train::SgdMomentum;
use crate::Tensor64;

const MAGIC: &[u8; 4] = b"SPKM";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epoch: usize,
    /// Free-form provenance, e.g. "snn-trained" or "converted-from-ann".
    pub kind: String,
    pub note: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerState {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

#[derive(Serialize, Deserialize)]
struct BlobInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: NetworkConfig,
    meta: CheckpointMeta,
    optimizer: Option<OptimizerState>,
    blobs: Vec<BlobInfo>,
}

#[derive(Debug)]
pub struct LoadedCheckpoint {
    pub net: Network,
    pub meta: CheckpointMeta,
    pub optimizer: Option<SgdMomentum>,
}

pub fn save_checkpoint(
    path: &Path,
    net: &Network,
    meta: &CheckpointMeta,
    optimizer: Option<&SgdMomentum>,
) -> Result<()> {
    let mut blobs: Vec<BlobInfo> = Vec::new();
    let mut data: Vec<u8> = Vec::new();
    let push_blob = |blobs: &mut Vec<BlobInfo>,
                         data: &mut Vec<u8>,
                         name: String,
                         tensor: &Tensor64| {
        blobs.push(BlobInfo { name, shape: tensor.shape().to_vec() });
        for &v in tensor.data() {
            data.extend_from_slice(&(v as f32).to_le_bytes());
        }
    };

    let params = net.named_parameters();
    for (name, t) in &params {
        push_blob(&mut blobs, &mut data, name.clone(), t);
    }
    for (name, t) in net.named_buffers() {
        push_blob(&mut blobs, &mut data, name, t);
    }
    let optimizer_state = match optimizer {
        Some(opt) => {
            let vel = opt.velocity();
            if !vel.is_empty() {
                if vel.len() != params.len() {
                    return Err(Error::Checkpoint(format!(
                        "optimizer tracks {} tensors but the network has {} parameters",
                        vel.len(),
                        params.len()
                    )));
                }
                for ((name, _), v) in params.iter().zip(vel.iter()) {
                    push_blob(&mut blobs, &mut data, format!("velocity.{}", name), v);
                }
            }
            Some(OptimizerState {
                lr: opt.lr,
                momentum: opt.momentum,
                weight_decay: opt.weight_decay,
            })
        }
        None => None,
    };

    let header = Header {
        format_version: FORMAT_VERSION,
        config: net.config.clone(),
        meta: meta.clone(),
        optimizer: optimizer_state,
        blobs,
    };
    let header_bytes = serde_json::to_vec(&header)?;

    let mut out = Vec::with_capacity(16 + header_bytes.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(&data);
    write_atomic(path, &out)
}

pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Checkpoint(format!("{}: {}", path.display(), e)))?;
    if bytes.len() < 16 || &bytes[0..4] != MAGIC {
        return Err(Error::Checkpoint(format!("{}: not a checkpoint file", path.display())));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("sliced four bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: format version {} unsupported (expected {})",
            path.display(),
            version,
            FORMAT_VERSION
        )));
    }
    let header_len =
        u64::from_le_bytes(bytes[8..16].try_into().expect("sliced eight bytes")) as usize;
    let header_bytes = bytes
        .get(16..16 + header_len)
        .ok_or_else(|| Error::Checkpoint(format!("{}: truncated header", path.display())))?;
    let header: Header = serde_json::from_slice(header_bytes)?;
    if header.format_version != version {
        return Err(Error::Checkpoint("header/container version mismatch".to_string()));
    }

    let mut offset = 16 + header_len;
    let mut tensors: std::collections::BTreeMap<String, Tensor64> =
        std::collections::BTreeMap::new();
    for info in &header.blobs {
        let numel: usize = info.shape.iter().product();
        let end = offset + numel * 4;
        let raw = bytes.get(offset..end).ok_or_else(|| {
            Error::Checkpoint(format!("{}: truncated blob {}", path.display(), info.name))
        })?;
        let mut data = Vec::with_capacity(numel);
        for chunk in raw.chunks_exact(4) {
            data.push(f32::from_le_bytes(chunk.try_into().expect("chunked four bytes")) as f64);
        }
        if tensors.insert(info.name.clone(), Tensor64::from_vec(&info.shape, data)?).is_some()
        {
            return Err(Error::Checkpoint(format!("duplicate blob {}", info.name)));
        }
        offset = end;
    }
    if offset != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{}: {} trailing bytes after the last blob",
            path.display(),
            bytes.len() - offset
        )));
    }

    let mut net = Network::new(header.config)?;
    for (name, slot) in net.named_parameters_mut() {
        let t = tensors.remove(&name).ok_or_else(|| {
            Error::Checkpoint(format!("missing parameter blob {}", name))
        })?;
        if t.shape() != slot.shape() {
            return Err(Error::Checkpoint(format!(
                "blob {} has shape {:?}, network expects {:?}",
                name,
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t;
    }
    for (name, slot) in net.named_buffers_mut() {
        let t = tensors.remove(&name).ok_or_else(|| {
            Error::Checkpoint(format!("missing buffer blob {}", name))
        })?;
        if t.shape() != slot.shape() {
            return Err(Error::Checkpoint(format!(
                "blob {} has shape {:?}, network expects {:?}",
                name,
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t;
    }

    let optimizer = match &header.optimizer {
        Some(state) => {
            let mut opt = SgdMomentum::new(state.lr, state.momentum, state.weight_decay)?;
            let param_names: Vec<String> =
                net.named_parameters().into_iter().map(|(n, _)| n).collect();
            let has_velocity = tensors.keys().any(|k| k.starts_with("velocity."));
            if has_velocity {
                let mut velocity = Vec::with_capacity(param_names.len());
                for name in &param_names {
                    let key = format!("velocity.{}", name);
                    velocity.push(tensors.remove(&key).ok_or_else(|| {
                        Error::Checkpoint(format!("missing velocity blob for {}", name))
                    })?);
                }
                opt.set_velocity(velocity);
            }
            Some(opt)
        }
        None => None,
    };
    if let Some(stray) = tensors.keys().next() {
        return Err(Error::Checkpoint(format!("unexpected blob {}", stray)));
    }

    Ok(LoadedCheckpoint { net, meta: header.meta, optimizer })
}
