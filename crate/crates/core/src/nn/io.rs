//! Model file format.
//!
//! ```text
//! magic      4 bytes  "DSKW"
//! version    u32 LE
//! header_len u32 LE
//! header     JSON: {"config": NetworkConfig, "tensors": [[shape...], ...]}
//! per tensor: f32 LE values, in header order
//! checksum   32 bytes SHA-256 over everything above
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{Network, NetworkConfig, Params};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DSKW";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
struct Header {
    config: NetworkConfig,
    tensors: Vec<Vec<usize>>,
}

pub fn encode_model(net: &Network<f32>) -> Result<Vec<u8>> {
    let header = Header {
        config: net.config().clone(),
        tensors: net.tensors().iter().map(|t| t.shape().to_vec()).collect(),
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + header.len() + 4 * net.param_count() + CHECKSUM_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for t in net.tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<Network<f32>> {
    if bytes.len() < 12 {
        return Err(Error::ChecksumMismatch);
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::InvalidConfig("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < 12 + CHECKSUM_LEN {
        return Err(Error::ChecksumMismatch);
    }
    let (body, sum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != sum {
        return Err(Error::ChecksumMismatch);
    }
    let header_len = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes")) as usize;
    let header_end = 12usize
        .checked_add(header_len)
        .filter(|&e| e <= body.len())
        .ok_or(Error::ChecksumMismatch)?;
    let header: Header = serde_json::from_slice(&body[12..header_end])?;

    let mut cursor = header_end;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for shape in header.tensors {
        let n: usize = shape.iter().product();
        let end = cursor + 4 * n;
        if end > body.len() {
            return Err(Error::ChecksumMismatch);
        }
        let data = body[cursor..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.push(Tensor::new(shape, data)?);
        cursor = end;
    }
    if cursor != body.len() {
        return Err(Error::InvalidConfig("trailing bytes after weights".into()));
    }

    let mut it = tensors.into_iter();
    let params = header
        .config
        .layers
        .iter()
        .map(|l| {
            if l.has_params() {
                match (it.next(), it.next()) {
                    (Some(weight), Some(bias)) => Ok(Some(Params { weight, bias })),
                    _ => Err(Error::InvalidConfig("missing parameter tensors".into())),
                }
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if it.next().is_some() {
        return Err(Error::InvalidConfig("unused parameter tensors".into()));
    }
    Network::from_params(header.config, params)
}

/// Writes the model atomically (temporary file, then rename).
pub fn save_model(path: impl AsRef<Path>, net: &Network<f32>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_model(net)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network<f32>> {
    decode_model(&std::fs::read(path)?)
}

/// Hex SHA-256 over the parameter values only (not the header).
pub fn weights_digest(net: &Network<f32>) -> String {
    let mut h = Sha256::new();
    for t in net.tensors() {
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
