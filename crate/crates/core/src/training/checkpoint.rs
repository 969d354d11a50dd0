//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "SAAMCKPT" | u32 version | u32 len + JSON config
//! | 32-byte vocabulary SHA-256 | u32 tensor count
//! | per tensor: u32 len + name, u32 rank, rank x u64 dims, f64 values
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::tensor::{ParamStore, Tensor};
use crate::text::Vocabulary;

pub const MAGIC: &[u8; 8] = b"SAAMCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training: Option<TrainConfig>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: Option<TrainConfig>,
    pub vocab_hash: [u8; 32],
    pub params: ParamStore,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CorruptCheckpoint(format!(
                "truncated while reading {what}"
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

impl Checkpoint {
    pub fn from_model(
        model: &Model,
        train_config: Option<&TrainConfig>,
        vocab: &Vocabulary,
    ) -> Self {
        Self {
            model_config: model.config().clone(),
            train_config: train_config.cloned(),
            vocab_hash: vocab.hash(),
            params: model.params().clone(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        Model::from_params(self.model_config, self.params)
    }

    /// Fails unless the checkpoint was trained with this exact vocabulary.
    pub fn verify_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        let found = vocab.hash();
        if found != self.vocab_hash {
            return Err(Error::VocabularyMismatch {
                expected: hex::encode(self.vocab_hash),
                found: hex::encode(found),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            model: self.model_config.clone(),
            training: self.train_config.clone(),
        };
        let json = serde_json::to_vec(&header).expect("config serialises");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_u32(&mut out, json.len());
        out.extend_from_slice(&json);
        out.extend_from_slice(&self.vocab_hash);
        put_u32(&mut out, self.params.len());
        for (_, name, t) in self.params.iter() {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.rank());
            for d in t.shape() {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(MAGIC.len(), "magic")? != MAGIC {
            return Err(Error::CorruptCheckpoint("bad magic bytes".into()));
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let len = r.u32("config length")? as usize;
        let header: Header = serde_json::from_slice(r.take(len, "config")?)
            .map_err(|e| Error::CorruptCheckpoint(format!("config: {e}")))?;
        let vocab_hash: [u8; 32] = r.take(32, "vocabulary hash")?.try_into().expect("32 bytes");
        let count = r.u32("tensor count")?;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let n = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(n, "name")?)
                .map_err(|_| Error::CorruptCheckpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32("rank")? as usize;
            if rank > 8 {
                return Err(Error::CorruptCheckpoint(format!(
                    "{name}: implausible rank {rank}"
                )));
            }
            let mut shape = Vec::with_capacity(rank);
            let mut numel: usize = 1;
            for _ in 0..rank {
                let d = r.u64("dimension")? as usize;
                numel = numel
                    .checked_mul(d)
                    .filter(|n| n.saturating_mul(8) <= r.remaining())
                    .ok_or_else(|| {
                        Error::CorruptCheckpoint(format!("{name}: dimensions exceed file size"))
                    })?;
                shape.push(d);
            }
            let raw = r.take(numel * 8, "values")?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t =
                Tensor::new(shape, data).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
            params
                .add(name, t)
                .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        }
        if r.remaining() != 0 {
            return Err(Error::CorruptCheckpoint(format!(
                "{} trailing bytes",
                r.remaining()
            )));
        }
        Ok(Self {
            model_config: header.model,
            train_config: header.training,
            vocab_hash,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
