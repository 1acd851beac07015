//! Metadata header attached to every output file.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::Config;

pub struct Meta(Value);

impl Meta {
    /// `inputs` are hashed by content, so the header does not depend on where
    /// the files live.
    pub fn new(command: &str, config: &Config, inputs: &[(&str, &Path)]) -> slm_core::Result<Self> {
        let config = serde_json::to_value(config).expect("config serializes");
        let hash = sha256_hex(
            serde_json::to_string(&json!({ "command": command, "config": config }))
                .expect("json")
                .as_bytes(),
        );
        let mut files = Map::new();
        for (name, path) in inputs {
            files.insert((*name).to_string(), Value::from(file_digest(path)?));
        }
        Ok(Meta(json!({
            "tool": "slm",
            "version": slm_core::VERSION,
            "rng": slm_core::rng::RNG_ALGORITHM,
            "command": command,
            "config_hash": hash,
            "config": config,
            "inputs": files,
        })))
    }

    pub fn value(&self) -> &Value {
        &self.0
    }

    /// The `{"_meta": ...}` line opening JSONL outputs.
    pub fn jsonl_line(&self) -> String {
        json!({ "_meta": self.0 }).to_string()
    }

    /// The same object behind `# `, for CSV outputs.
    pub fn csv_comment(&self) -> String {
        format!("# {}", self.jsonl_line())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> slm_core::Result<String> {
    let io = |e| slm_core::Error::io(path, e);
    let mut f = File::open(path).map_err(io)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let k = f.read(&mut buf).map_err(io)?;
        if k == 0 {
            break;
        }
        hasher.update(&buf[..k]);
    }
    Ok(format!("sha256:{:x}", hasher.finalize()))
}

pub fn create(path: &Path) -> slm_core::Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| slm_core::Error::io(path, e))
}

pub fn finish(mut w: impl Write, path: &Path) -> slm_core::Result<()> {
    w.flush().map_err(|e| slm_core::Error::io(path, e))
}

pub fn write_line(w: &mut impl Write, line: &str, path: &Path) -> slm_core::Result<()> {
    writeln!(w, "{line}").map_err(|e: io::Error| slm_core::Error::io(path, e))
}
