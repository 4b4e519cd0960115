//! Binary parameter archive.
//!
//! Layout: 8-byte magic, little-endian `u64` header length, JSON header,
//! then each tensor's `f32` values little-endian in header order.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use dgcan_core::harness::DepthMode;
use dgcan_core::net::{LossWeights, ModelConfig, ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

const MAGIC: &[u8; 8] = b"DGCANPK1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub loss_weights: LossWeights,
    pub depth_mode: DepthMode,
    pub iteration: usize,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub loss_weights: LossWeights,
    pub depth_mode: DepthMode,
    pub iteration: usize,
    pub params: ParamStore<f32>,
}

fn invalid(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint { path: path.to_path_buf(), reason: reason.into() }
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            model: self.model.clone(),
            loss_weights: self.loss_weights,
            depth_mode: self.depth_mode,
            iteration: self.iteration,
            tensors: self
                .params
                .tensors
                .iter()
                .map(|(name, t)| TensorEntry { name: name.clone(), shape: t.shape.clone() })
                .collect(),
        };
        let json = serde_json::to_vec(&header).at(path)?;
        // Write to a sibling file first so an interrupted save never
        // clobbers the previous checkpoint.
        let tmp = path.with_extension("partial");
        let mut out = BufWriter::new(fs::File::create(&tmp).at(&tmp)?);
        out.write_all(MAGIC).at(&tmp)?;
        out.write_all(&(json.len() as u64).to_le_bytes()).at(&tmp)?;
        out.write_all(&json).at(&tmp)?;
        for t in self.params.tensors.values() {
            for v in &t.data {
                out.write_all(&v.to_le_bytes()).at(&tmp)?;
            }
        }
        out.into_inner().map_err(|e| e.into_error()).at(&tmp)?.sync_all().at(&tmp)?;
        fs::rename(&tmp, path).at(path)
    }

    /// Read an archive and check that its tensors are exactly the ones its
    /// model configuration defines.
    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path).at(path)?.read_to_end(&mut bytes).at(path)?;
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(invalid(path, "not a parameter archive"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..).unwrap_or_default();
        if header_len > body.len() {
            return Err(invalid(path, "truncated header"));
        }
        let header: CheckpointHeader = serde_json::from_slice(&body[..header_len]).at(path)?;
        let mut data = &body[header_len..];
        let mut params = ParamStore::new();
        for entry in &header.tensors {
            let n: usize = entry.shape.iter().product();
            if data.len() < 4 * n {
                return Err(invalid(path, format!("truncated data for {}", entry.name)));
            }
            let values = data[..4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            data = &data[4 * n..];
            params.insert(&entry.name, Tensor::from_vec(&entry.shape, values)?);
        }
        if !data.is_empty() {
            return Err(invalid(path, format!("{} trailing bytes", data.len())));
        }
        let expected = header.model.init_params::<f32>(0)?;
        expected.check_compatible(&params).map_err(|e| invalid(path, e.to_string()))?;
        Ok(Self {
            model: header.model,
            loss_weights: header.loss_weights,
            depth_mode: header.depth_mode,
            iteration: header.iteration,
            params,
        })
    }

    /// As [`Checkpoint::load`], additionally requiring `model`.
    pub fn load_for(path: &Path, model: &ModelConfig) -> Result<Self> {
        let ckpt = Self::load(path)?;
        if &ckpt.model != model {
            return Err(invalid(path, "model configuration differs from the requested one"));
        }
        Ok(ckpt)
    }
}
