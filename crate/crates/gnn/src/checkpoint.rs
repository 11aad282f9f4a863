//! Self-describing model files: a text header followed by raw parameters.
//!
//! ```text
//! maxsat-gnn-checkpoint 1
//! kind nsfg
//! dim 64
//! layers 10
//! init_seed 0
//! params 26
//! agg_c.0.b 1 64
//! ...
//! end
//! <little-endian f32 payloads in header order>
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{ModelConfig, ModelError, ModelKind};
use crate::optim::Params;
use crate::tensor::Tensor;

pub const MAGIC: &str = "maxsat-gnn-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("unsupported checkpoint version {found} (expected {VERSION})")]
    Version { found: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("parameters do not match the configured architecture: {0}")]
    ParamMismatch(#[from] ModelError),
    #[error("checkpoint holds a {found} model, expected {expected}")]
    KindMismatch { expected: ModelKind, found: ModelKind },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Params,
}

fn corrupt(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Corrupt(msg.into())
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: Params) -> Result<Self, CheckpointError> {
        config.check_params(&params)?;
        Ok(Checkpoint { config, params })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut header = format!(
            "{MAGIC} {VERSION}\nkind {}\ndim {}\nlayers {}\ninit_seed {}\nparams {}\n",
            c.kind,
            c.dim,
            c.layers,
            c.init_seed,
            self.params.len()
        );
        for (name, t) in &self.params {
            header.push_str(&format!("{name} {} {}\n", t.rows(), t.cols()));
        }
        header.push_str("end\n");
        let mut out = header.into_bytes();
        for t in self.params.values() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut pos = 0;
        let mut next_line = || -> Result<&str, CheckpointError> {
            let rest = &bytes[pos..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| corrupt("truncated header"))?;
            pos += end + 1;
            std::str::from_utf8(&rest[..end]).map_err(|_| corrupt("header is not UTF-8"))
        };

        let first = next_line()?;
        let version = first
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| corrupt("missing magic line"))?
            .parse::<u32>()
            .map_err(|_| corrupt("bad version"))?;
        if version != VERSION {
            return Err(CheckpointError::Version { found: version });
        }

        let mut field = |key: &str| -> Result<String, CheckpointError> {
            let line = next_line()?;
            line.strip_prefix(key)
                .and_then(|v| v.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| corrupt(format!("expected `{key}`, found `{line}`")))
        };
        let number = |s: String, key: &str| -> Result<u64, CheckpointError> {
            s.parse().map_err(|_| corrupt(format!("bad `{key}` value `{s}`")))
        };
        let kind: ModelKind = field("kind")?.parse().map_err(|_| corrupt("unknown model kind"))?;
        let dim = number(field("dim")?, "dim")? as usize;
        let layers = number(field("layers")?, "layers")? as usize;
        let init_seed = number(field("init_seed")?, "init_seed")?;
        let count = number(field("params")?, "params")? as usize;
        let config = ModelConfig::new(kind, dim, layers, init_seed)?;

        let mut table = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let line = next_line()?;
            let parts: Vec<&str> = line.split(' ').collect();
            let [name, rows, cols] = parts[..] else {
                return Err(corrupt(format!("bad parameter entry `{line}`")));
            };
            let rows: usize = rows.parse().map_err(|_| corrupt("bad row count"))?;
            let cols: usize = cols.parse().map_err(|_| corrupt("bad column count"))?;
            table.push((name.to_string(), rows, cols));
        }
        if next_line()? != "end" {
            return Err(corrupt("missing `end` line"));
        }

        let mut params = Params::new();
        let mut payload = &bytes[pos..];
        for (name, rows, cols) in table {
            let need = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| corrupt("parameter too large"))?;
            if payload.len() < need {
                return Err(corrupt(format!("truncated payload for `{name}`")));
            }
            let (chunk, rest) = payload.split_at(need);
            payload = rest;
            let data = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            let t = Tensor::from_vec(rows, cols, data).expect("sized by header");
            if params.insert(name.clone(), t).is_some() {
                return Err(corrupt(format!("duplicate parameter `{name}`")));
            }
        }
        if !payload.is_empty() {
            return Err(corrupt(format!("{} trailing bytes", payload.len())));
        }
        Checkpoint::new(config, params)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    /// Load, insisting on a particular architecture.
    pub fn load_as(path: &Path, expected: ModelKind) -> Result<Self, CheckpointError> {
        let ckpt = Self::load(path)?;
        if ckpt.config.kind != expected {
            return Err(CheckpointError::KindMismatch {
                expected,
                found: ckpt.config.kind,
            });
        }
        Ok(ckpt)
    }
}
