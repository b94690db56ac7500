//! Model files.
//!
//! ```text
//! magic         8 bytes  "SSVEPCNN"
//! version       u16      1
//! input_len     u32
//! conv_filters  u32
//! kernel_size   u32
//! dropout_rate  f64
//! pool_size     u32
//! hidden_units  u32
//! n_classes     u32
//! weights       f64 × n, in order conv1_w conv1_b conv2_w conv2_b
//!                                  dense1_w dense1_b dense2_w dense2_b
//! ```
//! All little-endian. Tensor lengths are implied by the config.

use std::fs;
use std::path::Path;

use super::{Cnn, CnnConfig, CnnParams, NetError};

pub const MODEL_MAGIC: &[u8; 8] = b"SSVEPCNN";
pub const MODEL_VERSION: u16 = 1;
const HEADER_LEN: usize = 8 + 2 + 4 * 3 + 8 + 4 * 3;

pub fn encode_model(model: &Cnn) -> Vec<u8> {
    let c = &model.config;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * model.params.n_params());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    for v in [c.input_len, c.conv_filters, c.kernel_size] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&c.dropout_rate.to_le_bytes());
    for v in [c.pool_size, c.hidden_units, c.n_classes] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for t in model.params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<Cnn, NetError> {
    if bytes.len() < 8 || &bytes[..8] != MODEL_MAGIC {
        return Err(NetError::BadMagic);
    }
    if bytes.len() < 10 {
        return Err(NetError::Truncated("missing version".into()));
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != MODEL_VERSION {
        return Err(NetError::UnsupportedVersion(version));
    }
    if bytes.len() < HEADER_LEN {
        return Err(NetError::Truncated("header incomplete".into()));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    let config = CnnConfig {
        input_len: u32_at(10),
        conv_filters: u32_at(14),
        kernel_size: u32_at(18),
        dropout_rate: f64::from_le_bytes(bytes[22..30].try_into().unwrap()),
        pool_size: u32_at(30),
        hidden_units: u32_at(34),
        n_classes: u32_at(38),
    };
    config
        .validate()
        .map_err(|e| NetError::ShapeMismatch(format!("config in file is inconsistent: {e}")))?;

    let lens = config.tensor_lens();
    let expected: usize = lens.iter().sum::<usize>() * 8;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(NetError::Truncated(format!(
            "expected {expected} weight bytes, found {}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(NetError::ShapeMismatch(format!(
            "{} weight bytes present but config implies {expected}",
            payload.len()
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut params = CnnParams::zeros(&config);
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = values.next().unwrap();
        }
    }
    Cnn::new(config, params)
}

pub fn save_model(model: &Cnn, path: impl AsRef<Path>) -> Result<(), NetError> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Cnn, NetError> {
    decode_model(&fs::read(path)?)
}
