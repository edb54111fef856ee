//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "VABKCKPT"
//! version    u32
//! header_len u64
//! header     JSON: model config, tensor index (name, shape, offset, len),
//!            normalization stats, spectrogram config, metadata
//! payload    f32 values, tensors concatenated in index order
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::audio::SpectrogramConfig;
use crate::error::{Error, Result};
use crate::training::NormStats;

pub const MAGIC: &[u8; 8] = b"VABKCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the payload, in elements.
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    model_config: ModelConfig,
    tensors: Vec<TensorEntry>,
    norm_stats: Option<NormStats>,
    spectrogram: Option<SpectrogramConfig>,
    metadata: BTreeMap<String, String>,
}

/// Model parameters plus everything needed to run inference on raw audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub norm_stats: Option<NormStats>,
    pub spectrogram: Option<SpectrogramConfig>,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(params: ModelParams<f32>) -> Self {
        Self { params, norm_stats: None, spectrogram: None, metadata: BTreeMap::new() }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::new();
        let mut offset = 0;
        for t in self.params.weights().tensors() {
            tensors.push(TensorEntry { name: t.name, shape: t.shape, offset, len: t.data.len() });
            offset += t.data.len();
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            model_config: self.params.config().clone(),
            tensors,
            norm_stats: self.norm_stats.clone(),
            spectrogram: self.spectrogram.clone(),
            metadata: self.metadata.clone(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + header.len() + 4 * offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.params.weights().tensors() {
            for v in t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_owned());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let header_end = 20usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[20..header_end])?;
        let payload = &bytes[header_end..];
        let total: usize = header.tensors.iter().map(|t| t.len).sum();
        if payload.len() != 4 * total {
            return Err(Error::Checkpoint(format!("payload has {} bytes, index expects {}", payload.len(), 4 * total)));
        }
        let mut params = ModelParams::<f32>::init_zeroed(&header.model_config)?;
        {
            let targets = params.weights_mut().tensors_mut();
            if targets.len() != header.tensors.len() {
                return Err(bad("tensor count does not match model config"));
            }
            for (dst, entry) in targets.into_iter().zip(&header.tensors) {
                if dst.name != entry.name || dst.shape != entry.shape || dst.data.len() != entry.len {
                    return Err(Error::Checkpoint(format!("tensor {} does not match the model layout", entry.name)));
                }
                let raw = payload
                    .get(4 * entry.offset..4 * (entry.offset + entry.len))
                    .ok_or_else(|| bad("tensor offset out of range"))?;
                for (d, chunk) in dst.data.iter_mut().zip(raw.chunks_exact(4)) {
                    *d = f32::from_le_bytes(chunk.try_into().unwrap());
                }
            }
        }
        if let Some(stats) = &header.norm_stats {
            stats.validate(header.model_config.input_dim)?;
        }
        Ok(Self { params, norm_stats: header.norm_stats, spectrogram: header.spectrogram, metadata: header.metadata })
    }

    /// Writes via a temporary sibling file and rename, so readers never see a partial file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::fsutil::write_atomic(path.as_ref(), &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?)
    }
}
