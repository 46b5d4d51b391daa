//! Binary checkpoints.
//!
//! Little-endian layout: magic `SGBD`, u32 version (1), u32 layer count L,
//! L + 1 u32 dims, f32 dropout rate, then per layer the `[out × in]` weights
//! row-major followed by the biases, then a u32 CRC32 of every preceding
//! byte. A JSON manifest with the same stem sits next to the binary file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::MlpModel;
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::patch_graph::FeatureSet;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SGBD";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_LAYERS: usize = 64;
const MAX_PARAMETERS: usize = 1 << 28;

pub fn save_checkpoint(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 * model.parameter_count() + 64);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layer_count() as u32).to_le_bytes());
    for &d in model.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&model.dropout_rate().to_le_bytes());
    for l in 0..model.layer_count() {
        for v in model.weights(l).iter().chain(model.biases(l)) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<MlpModel> {
    if bytes.len() < 16 {
        return Err(Error::Checkpoint(format!("{} bytes is shorter than a header", bytes.len())));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut cursor = 4;
    let mut word = || -> Result<[u8; 4]> {
        let w = body
            .get(cursor..cursor + 4)
            .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
        cursor += 4;
        Ok(w.try_into().unwrap())
    };
    let version = u32::from_le_bytes(word()?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let layers = u32::from_le_bytes(word()?) as usize;
    if layers == 0 || layers > MAX_LAYERS {
        return Err(Error::Checkpoint(format!("layer count {layers} out of range")));
    }
    let dims = (0..=layers)
        .map(|_| word().map(|w| u32::from_le_bytes(w) as usize))
        .collect::<Result<Vec<_>>>()?;
    let dropout = f32::from_le_bytes(word()?);
    let mut total = 0usize;
    for d in dims.windows(2) {
        total = d[0]
            .checked_mul(d[1])
            .and_then(|w| w.checked_add(d[1]))
            .and_then(|n| n.checked_add(total))
            .filter(|&n| n <= MAX_PARAMETERS)
            .ok_or_else(|| Error::Checkpoint(format!("dimensions {dims:?} overflow")))?;
    }
    let header = 4 * (4 + dims.len());
    if body.len() != header + 4 * total {
        return Err(Error::Checkpoint(format!(
            "dims {dims:?} need {} parameter bytes, file has {}",
            4 * total,
            body.len().saturating_sub(header)
        )));
    }
    let mut values = body[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let mut weights = Vec::with_capacity(layers);
    let mut biases = Vec::with_capacity(layers);
    for d in dims.windows(2) {
        weights.push(values.by_ref().take(d[0] * d[1]).collect());
        biases.push(values.by_ref().take(d[1]).collect());
    }
    MlpModel::from_parts(&dims, weights, biases, dropout)
        .map_err(|e| Error::Checkpoint(format!("invalid model: {e}")))
}

/// Sidecar JSON describing how a checkpoint was trained and what it expects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub features: FeatureSet,
    /// Implicit feature width per patch (0 without implicit features).
    pub implicit_dim: usize,
    pub layer_dims: Vec<usize>,
    pub parameter_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_config: Option<TrainConfig>,
}

impl CheckpointManifest {
    pub fn path_for(checkpoint: &Path) -> PathBuf {
        checkpoint.with_extension("json")
    }
}

/// Write the checkpoint and its manifest.
pub fn write_checkpoint(path: &Path, model: &MlpModel, manifest: &CheckpointManifest) -> Result<()> {
    fs::write(path, save_checkpoint(model))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    crate::imagery::write_json(&CheckpointManifest::path_for(path), manifest)
}

/// Read a checkpoint and, when present, its manifest.
pub fn read_checkpoint(path: &Path) -> Result<(MlpModel, Option<CheckpointManifest>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let model = load_checkpoint(&bytes)?;
    let manifest_path = CheckpointManifest::path_for(path);
    let manifest = if manifest_path.is_file() {
        Some(crate::imagery::read_json(&manifest_path)?)
    } else {
        None
    };
    Ok((model, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> MlpModel {
        MlpModel::new(&[5, 7, 3, 1], 0.3, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = save_checkpoint(&m);
        assert_eq!(&bytes[..4], b"SGBD");
        let back = load_checkpoint(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(save_checkpoint(&back), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = save_checkpoint(&model());
        assert!(matches!(
            load_checkpoint(&bytes[..bytes.len() - 9]).unwrap_err(),
            Error::Checksum { .. }
        ));
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(load_checkpoint(&flipped).unwrap_err(), Error::Checksum { .. }));
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(load_checkpoint(&magic).is_err());
    }

    #[test]
    fn absurd_dims_are_rejected_before_allocation() {
        let mut body = Vec::new();
        body.extend_from_slice(b"SGBD");
        body.extend_from_slice(&1u32.to_le_bytes());
        body.extend_from_slice(&1u32.to_le_bytes());
        body.extend_from_slice(&u32::MAX.to_le_bytes());
        body.extend_from_slice(&u32::MAX.to_le_bytes());
        body.extend_from_slice(&0.0f32.to_le_bytes());
        let crc = crc32fast::hash(&body);
        body.extend_from_slice(&crc.to_le_bytes());
        assert!(load_checkpoint(&body).unwrap_err().to_string().contains("overflow"));
    }
}
