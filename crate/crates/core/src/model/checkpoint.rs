//! Versioned checkpoint container.
//!
//! Layout: the 8-byte magic `SLMCKPT\0`, a little-endian `u32` format version,
//! a little-endian `u32` header length, a UTF-8 JSON header (model config,
//! tensor specs, training state), then every tensor's entries in row-major
//! order as little-endian `f64`. Both supported scalar types widen to `f64`
//! exactly, so `load(save(p)) == p` bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::matrix::Matrix;
use super::train::TrainingConfig;
use super::{ModelConfig, ModelParams, TensorSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"SLMCKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<F> {
    pub params: ModelParams<F>,
    pub epochs_done: usize,
    pub training: Option<TrainingConfig>,
    pub metadata: Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorSpec>,
    epochs_done: usize,
    #[serde(default)]
    training: Option<TrainingConfig>,
    #[serde(default)]
    metadata: Value,
}

fn ckpt_err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_checkpoint<F: Scalar, W: Write>(ckpt: &Checkpoint<F>, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let header = Header {
        config: ckpt.params.config.clone(),
        tensors: ckpt.params.specs().to_vec(),
        epochs_done: ckpt.epochs_done,
        training: ckpt.training.clone(),
        metadata: ckpt.metadata.clone(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let io = |e| Error::io("<checkpoint>", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(header.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&header).map_err(io)?;
    for m in ckpt.params.values() {
        for &x in m.data() {
            w.write_all(&x.to_f64_lossless().to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_checkpoint<F: Scalar, R: Read>(mut reader: R) -> Result<Checkpoint<F>> {
    let mut magic = [0u8; 8];
    reader
        .read_exact(&mut magic)
        .map_err(|_| ckpt_err("file too short"))?;
    if &magic != MAGIC {
        return Err(ckpt_err("not a checkpoint (bad magic)"));
    }
    let mut word = [0u8; 4];
    reader.read_exact(&mut word).map_err(|_| ckpt_err("truncated"))?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(ckpt_err(format!("unsupported version {version}")));
    }
    reader.read_exact(&mut word).map_err(|_| ckpt_err("truncated"))?;
    let mut header = vec![0u8; u32::from_le_bytes(word) as usize];
    reader.read_exact(&mut header).map_err(|_| ckpt_err("truncated header"))?;
    let header: Header =
        serde_json::from_slice(&header).map_err(|e| ckpt_err(format!("header: {e}")))?;
    if header.tensors != header.config.layout() {
        return Err(ckpt_err("tensor table does not match the model configuration"));
    }
    let mut values = Vec::with_capacity(header.tensors.len());
    let mut buf = [0u8; 8];
    for spec in &header.tensors {
        let mut data = Vec::with_capacity(spec.rows * spec.cols);
        for _ in 0..spec.rows * spec.cols {
            reader
                .read_exact(&mut buf)
                .map_err(|_| ckpt_err(format!("truncated tensor {}", spec.name)))?;
            data.push(F::of(f64::from_le_bytes(buf)));
        }
        values.push(Matrix::from_vec(spec.rows, spec.cols, data));
    }
    if reader.read(&mut buf).map_err(|e| Error::io("<checkpoint>", e))? != 0 {
        return Err(ckpt_err("trailing bytes after tensors"));
    }
    Ok(Checkpoint {
        params: ModelParams::from_parts(header.config, values)?,
        epochs_done: header.epochs_done,
        training: header.training,
        metadata: header.metadata,
    })
}

pub fn save_checkpoint<F: Scalar>(ckpt: &Checkpoint<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(ckpt, file)
}

pub fn load_checkpoint<F: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<F>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}
