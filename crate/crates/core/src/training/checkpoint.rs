//! Binary checkpoints: `S3DR` magic, `u32` format version, `u64` metadata
//! length, JSON metadata, then little-endian `f32` values in metadata order
//! (all parameter values, then Adam first moments, then second moments).

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::schedule::{LogRow, Progress, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::models::{Model, ModelConfig};

pub const MAGIC: &[u8; 4] = b"S3DR";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    /// Element offset into the value block.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Metadata {
    model: ModelConfig,
    train: TrainConfig,
    progress: Progress,
    adam_step: u64,
    tensors: Vec<TensorEntry>,
    /// Elements per block; the payload holds three blocks.
    block_len: usize,
    log: Vec<LogRow>,
}

/// Decoded checkpoint contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub progress: Progress,
    pub tensors: Vec<TensorEntry>,
    pub values: Vec<f32>,
    pub adam_step: u64,
    pub adam_m: Vec<f32>,
    pub adam_v: Vec<f32>,
    pub log: Vec<LogRow>,
}

pub fn encode_checkpoint(trainer: &Trainer) -> Result<Vec<u8>> {
    let params = &trainer.model.params;
    let mut tensors = Vec::with_capacity(params.len());
    let mut offset = 0;
    for (_, p) in params.iter() {
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: p.shape.clone(),
            trainable: p.trainable,
            offset,
        });
        offset += p.len();
    }
    let meta = Metadata {
        model: trainer.model.config.clone(),
        train: trainer.cfg.clone(),
        progress: trainer.progress,
        adam_step: trainer.adam.step,
        tensors,
        block_len: offset,
        log: trainer.log.clone(),
    };
    let json = serde_json::to_vec(&meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + 12 * offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, p) in params.iter() {
        out.extend(p.values.iter().flat_map(|v| v.to_le_bytes()));
    }
    for block in [&trainer.adam.m, &trainer.adam.v] {
        for b in block.iter() {
            out.extend(b.iter().flat_map(|v| v.to_le_bytes()));
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let truncated = || Error::Checkpoint("file is truncated".into());
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned();
        return Err(Error::CheckpointVersion {
            found: format!("magic {found:?}"),
            expected: format!("magic \"S3DR\" version {VERSION}"),
        });
    }
    let version = u32::from_le_bytes(bytes.get(4..8).ok_or_else(truncated)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::CheckpointVersion {
            found: version.to_string(),
            expected: VERSION.to_string(),
        });
    }
    let meta_len = u64::from_le_bytes(bytes.get(8..16).ok_or_else(truncated)?.try_into().expect("8 bytes")) as usize;
    let meta_end = 16usize.checked_add(meta_len).ok_or_else(truncated)?;
    let meta: Metadata = serde_json::from_slice(bytes.get(16..meta_end).ok_or_else(truncated)?)
        .map_err(|e| Error::Checkpoint(format!("bad metadata: {e}")))?;
    let n = meta.block_len;
    let payload = &bytes[meta_end..];
    if payload.len() != 12 * n {
        return Err(if payload.len() < 12 * n {
            truncated()
        } else {
            Error::Checkpoint("trailing bytes after payload".into())
        });
    }
    let floats: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let mut expected = 0;
    for t in &meta.tensors {
        if t.offset != expected {
            return Err(Error::Checkpoint(format!("tensor {} has inconsistent offset", t.name)));
        }
        expected += t.shape.iter().product::<usize>();
    }
    if expected != n {
        return Err(Error::Checkpoint("tensor sizes do not add up to the payload".into()));
    }
    Ok(Checkpoint {
        model: meta.model,
        train: meta.train,
        progress: meta.progress,
        tensors: meta.tensors,
        values: floats[..n].to_vec(),
        adam_step: meta.adam_step,
        adam_m: floats[n..2 * n].to_vec(),
        adam_v: floats[2 * n..].to_vec(),
        log: meta.log,
    })
}

pub fn save_checkpoint(trainer: &Trainer, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(trainer)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

impl Checkpoint {
    /// Copies the stored values into `model`, requiring identical parameter
    /// names, order and shapes.
    pub fn restore_model(&self, model: &mut Model<f32>) -> Result<()> {
        self.check_layout(model)?;
        let ids: Vec<_> = model.params.ids().collect();
        for (id, t) in ids.into_iter().zip(&self.tensors) {
            let p = model.params.get_mut(id);
            let len = p.len();
            p.values.copy_from_slice(&self.values[t.offset..t.offset + len]);
        }
        Ok(())
    }

    fn check_layout(&self, model: &Model<f32>) -> Result<()> {
        if model.params.len() != self.tensors.len() {
            return Err(Error::shape(format!(
                "checkpoint holds {} tensors, model has {}",
                self.tensors.len(),
                model.params.len()
            )));
        }
        for ((_, p), t) in model.params.iter().zip(&self.tensors) {
            if p.name != t.name {
                return Err(Error::shape(format!("parameter {} found where {} was expected", t.name, p.name)));
            }
            if p.shape != t.shape {
                return Err(Error::shape(format!(
                    "parameter {}: checkpoint shape {:?}, model shape {:?}",
                    p.name, t.shape, p.shape
                )));
            }
        }
        Ok(())
    }

    /// Model built from the stored configuration with the stored values.
    pub fn model(&self) -> Result<Model<f32>> {
        let mut m = Model::new(self.model.clone(), 0)?;
        self.restore_model(&mut m)?;
        Ok(m)
    }

    /// Rebuilds the full training state.
    pub fn trainer(&self) -> Result<Trainer> {
        let model = self.model()?;
        let mut adam = AdamState::new(&model.params);
        adam.step = self.adam_step;
        for (k, t) in self.tensors.iter().enumerate() {
            let len: usize = t.shape.iter().product();
            adam.m[k].copy_from_slice(&self.adam_m[t.offset..t.offset + len]);
            adam.v[k].copy_from_slice(&self.adam_v[t.offset..t.offset + len]);
        }
        let mut trainer = Trainer::new(model, self.train.clone())?;
        trainer.adam = adam;
        trainer.progress = self.progress;
        trainer.log = self.log.clone();
        Ok(trainer)
    }
}
