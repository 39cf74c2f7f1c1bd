//! Binary parameter checkpoints: magic, JSON header, little-endian `f64` data.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::model::Model;
use crate::tape::Mat;

const MAGIC: &[u8; 8] = b"CTCKPT01";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint vocabulary {found} does not match {expected}")]
    VocabMismatch { found: String, expected: String },
    #[error("checkpoint does not fit its config: {0}")]
    Incompatible(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    vocab_hash: String,
    step: u64,
    tensors: Vec<TensorInfo>,
}

/// A model restored from disk together with its bookkeeping.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab_hash: String,
    pub step: u64,
}

pub fn write_checkpoint(mut w: impl Write, model: &Model, vocab_hash: &str, step: u64) -> io::Result<()> {
    let header = Header {
        version: VERSION,
        config: model.config.clone(),
        vocab_hash: vocab_hash.to_string(),
        step,
        tensors: model
            .params
            .iter()
            .map(|(_, name, m)| TensorInfo {
                name: name.to_string(),
                rows: m.nrows(),
                cols: m.ncols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for (_, _, m) in model.params.iter() {
        for x in m.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_checkpoint(mut r: impl Read) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    if header.version != VERSION {
        return Err(CheckpointError::Version(header.version));
    }
    let mut named = Vec::with_capacity(header.tensors.len());
    let mut buf = [0u8; 8];
    for t in &header.tensors {
        let mut data = Vec::with_capacity(t.rows * t.cols);
        for _ in 0..t.rows * t.cols {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        let m = Mat::from_shape_vec((t.rows, t.cols), data).map_err(|e| CheckpointError::Incompatible(e.to_string()))?;
        named.push((t.name.clone(), m));
    }
    let mut model = Model::new(header.config, 0).map_err(|e| CheckpointError::Incompatible(e.to_string()))?;
    model.load_params(named).map_err(CheckpointError::Incompatible)?;
    Ok(Checkpoint {
        model,
        vocab_hash: header.vocab_hash,
        step: header.step,
    })
}

pub fn save(path: &Path, model: &Model, vocab_hash: &str, step: u64) -> io::Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), model, vocab_hash, step)
}

/// Loads a checkpoint and checks it was trained on the vocabulary `expected_hash`.
pub fn load(path: &Path, expected_hash: Option<&str>) -> Result<Checkpoint, CheckpointError> {
    let ck = read_checkpoint(BufReader::new(File::open(path)?))?;
    if let Some(expected) = expected_hash {
        if ck.vocab_hash != expected {
            return Err(CheckpointError::VocabMismatch {
                found: ck.vocab_hash,
                expected: expected.to_string(),
            });
        }
    }
    Ok(ck)
}
