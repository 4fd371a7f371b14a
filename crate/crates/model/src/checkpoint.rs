//! Self-describing checkpoint files.
//!
//! Layout: a UTF-8 header followed by raw little-endian parameters.
//!
//! ```text
//! LOOKAHEAD-CKPT 1
//! model.d_model=128          (every ModelConfig key)
//! meta.<key>=<value>         (caller-defined, e.g. task and augmentation)
//! vocab <count>
//! <one token per line>
//! params <fp32|fp64> <count>
//! <count * 4 or 8 bytes>
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use lookahead_core::kv::KvConfig;
use lookahead_core::Vocab;

use crate::config::{Dtype, ModelConfig};
use crate::error::ModelError;
use crate::scalar::Scalar;
use crate::transformer::Transformer;

pub const MAGIC: &str = "LOOKAHEAD-CKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint<S> {
    pub model: Transformer<S>,
    pub vocab: Vocab,
    pub meta: KvConfig,
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

impl<S: Scalar> Checkpoint<S> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut cfg = self.model.config.clone();
        cfg.dtype = S::DTYPE;
        let mut kv = KvConfig::new();
        kv.merge_prefixed("model.", &cfg.to_kv());
        kv.merge_prefixed("meta.", &self.meta);
        let mut out = Vec::new();
        writeln!(out, "{MAGIC} {VERSION}").unwrap();
        out.extend_from_slice(kv.to_text().as_bytes());
        writeln!(out, "vocab {}", self.vocab.len()).unwrap();
        out.extend_from_slice(self.vocab.to_text().as_bytes());
        writeln!(out, "params {} {}", S::DTYPE, self.model.params.len()).unwrap();
        for &p in &self.model.params {
            p.write_le(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut pos = 0;
        let mut next_line = || -> Result<&str, ModelError> {
            let rest = &bytes[pos..];
            let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header"))?;
            pos += end + 1;
            std::str::from_utf8(&rest[..end]).map_err(|_| bad("header is not UTF-8"))
        };
        let magic = next_line()?;
        if magic != format!("{MAGIC} {VERSION}") {
            return Err(bad(format!("unrecognized header {magic:?}")));
        }
        let mut kv_text = String::new();
        let vocab_len = loop {
            let line = next_line()?;
            if let Some(n) = line.strip_prefix("vocab ") {
                break n.parse::<usize>().map_err(|_| bad("bad vocab count"))?;
            }
            kv_text.push_str(line);
            kv_text.push('\n');
        };
        let mut vocab_text = String::new();
        for _ in 0..vocab_len {
            vocab_text.push_str(next_line()?);
            vocab_text.push('\n');
        }
        let params_line = next_line()?.to_string();
        let fields: Vec<&str> = params_line.split(' ').collect();
        let [tag, dtype, count] = fields[..] else {
            return Err(bad(format!("bad params line {params_line:?}")));
        };
        if tag != "params" {
            return Err(bad(format!("bad params line {params_line:?}")));
        }
        if dtype != S::DTYPE.to_string() {
            return Err(bad(format!("checkpoint holds {dtype} parameters, loader expects {}", S::DTYPE)));
        }
        let count: usize = count.parse().map_err(|_| bad("bad parameter count"))?;

        let kv = KvConfig::parse(&kv_text).map_err(|e| bad(e.to_string()))?;
        let base = ModelConfig::desk(0, 0);
        let config = ModelConfig::from_kv(&kv.section("model."), &base).map_err(|e| bad(e.to_string()))?;
        let vocab = Vocab::from_text(&vocab_text).map_err(|e| bad(e.to_string()))?;
        if vocab.len() != config.vocab_size {
            return Err(bad(format!("vocab has {} tokens, model expects {}", vocab.len(), config.vocab_size)));
        }
        let payload = &bytes[pos..];
        if payload.len() != count * S::BYTES {
            return Err(bad(format!("expected {} payload bytes, found {}", count * S::BYTES, payload.len())));
        }
        let params: Vec<S> = payload.chunks_exact(S::BYTES).map(S::read_le).collect();
        let model = Transformer::from_params(config, params)?;
        Ok(Self { model, vocab, meta: kv.section("meta.") })
    }

    /// Writes atomically via a sibling temporary file.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Reads only the dtype recorded in a checkpoint header.
pub fn peek_dtype(path: &Path) -> Result<Dtype, ModelError> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8_lossy(&bytes[..bytes.len().min(1 << 16)]);
    for line in text.lines() {
        if let Some(v) = line.strip_prefix("model.dtype=") {
            return v.parse().map_err(|e: String| bad(e));
        }
    }
    Err(bad("no model.dtype in header"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample<S: Scalar>() -> Checkpoint<S> {
        let vocab = Vocab::build([["a", "b", "=", ","]]).unwrap();
        let mut cfg = ModelConfig::desk(vocab.len(), 8);
        cfg.d_model = 16;
        cfg.d_ff = 32;
        cfg.n_layers = 2;
        let mut meta = KvConfig::new();
        meta.set("task.kind", "star");
        Checkpoint { model: Transformer::new(cfg, 3).unwrap(), vocab, meta }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let ck = sample::<f32>();
        let back = Checkpoint::<f32>::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back.model.params, ck.model.params);
        assert_eq!(back.vocab, ck.vocab);
        assert_eq!(back.meta.get_str("task.kind"), Some("star"));
        let ids = [1, 6, 7, 8];
        assert_eq!(back.model.forward(&ids, 1, 4).unwrap().logits, ck.model.forward(&ids, 1, 4).unwrap().logits);
    }

    #[test]
    fn dtype_mismatch_and_truncation_are_rejected() {
        let bytes = sample::<f64>().to_bytes();
        assert!(Checkpoint::<f32>::from_bytes(&bytes).is_err());
        assert!(Checkpoint::<f64>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::<f64>::from_bytes(b"nonsense\n").is_err());
    }
}
