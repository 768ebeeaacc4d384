//! Binary checkpoint: magic, format version, a length-prefixed JSON header
//! (config, epoch, dev accuracy, parameter names and shapes), then every
//! parameter's values as little-endian f64 in header order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::model::HdeModel;
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HDECKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub epoch: usize,
    pub dev_accuracy: f64,
    pub parameters: Vec<(String, Tensor)>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    epoch: usize,
    dev_accuracy: f64,
    parameters: Vec<ParamShape>,
}

#[derive(Serialize, Deserialize)]
struct ParamShape {
    name: String,
    rows: usize,
    cols: usize,
}

impl Checkpoint {
    pub fn from_model(model: &HdeModel, epoch: usize, dev_accuracy: f64) -> Self {
        Checkpoint {
            config: model.config.clone(),
            epoch,
            dev_accuracy,
            parameters: model.store.iter().map(|p| (p.name.clone(), p.tensor.clone())).collect(),
        }
    }

    /// Rebuilds the model and loads every parameter by name.
    pub fn to_model(&self) -> Result<HdeModel> {
        let mut model = HdeModel::new(&self.config)?;
        if model.store.len() != self.parameters.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters, model expects {}",
                self.parameters.len(),
                model.store.len()
            )));
        }
        for (name, t) in &self.parameters {
            let id = model
                .store
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
            let slot = &mut model.store.get_mut(id).tensor;
            if slot.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: shape {:?} in file, {:?} expected",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.clone();
        }
        Ok(model)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            config: self.config.clone(),
            epoch: self.epoch,
            dev_accuracy: self.dev_accuracy,
            parameters: self
                .parameters
                .iter()
                .map(|(name, t)| ParamShape {
                    name: name.clone(),
                    rows: t.rows(),
                    cols: t.cols(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let len = u32::try_from(json.len()).map_err(|_| Error::Checkpoint("header too large".into()))?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&json)?;
        for (_, t) in &self.parameters {
            let mut buf = Vec::with_capacity(t.len() * 8);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        Ok(buf)
    }

    pub fn read<R: Read>(mut r: R, name: &str) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Checkpoint(format!("{name}: truncated checkpoint")))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(format!("{name}: not a checkpoint file")));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::SchemaVersion {
                file: name.to_string(),
                expected: CHECKPOINT_VERSION,
                found: version,
            });
        }
        r.read_exact(&mut word)?;
        let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)
            .map_err(|e| Error::Checkpoint(format!("{name}: bad header: {e}")))?;
        let mut parameters = Vec::with_capacity(header.parameters.len());
        for p in header.parameters {
            let mut raw = vec![0u8; p.rows * p.cols * 8];
            r.read_exact(&mut raw)
                .map_err(|_| Error::Checkpoint(format!("{name}: truncated at parameter {}", p.name)))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            parameters.push((p.name, Tensor::new(p.rows, p.cols, data)?));
        }
        Ok(Checkpoint {
            config: header.config,
            epoch: header.epoch,
            dev_accuracy: header.dev_accuracy,
            parameters,
        })
    }

    /// Writes to a sibling temporary file, then renames into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::read(bytes.as_slice(), &path.display().to_string())
    }
}

/// Writes `bytes` via a temporary file in the same directory and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Invalid(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
