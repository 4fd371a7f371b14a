use std::fmt;
use std::str::FromStr;

use lookahead_core::kv::{KvConfig, KvError};

use crate::error::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dtype {
    F32,
    F64,
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dtype::F32 => "fp32",
            Dtype::F64 => "fp64",
        })
    }
}

impl FromStr for Dtype {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fp32" | "f32" => Ok(Dtype::F32),
            "fp64" | "f64" => Ok(Dtype::F64),
            _ => Err("expected fp32 or fp64".into()),
        }
    }
}

/// Shape of a pre-norm decoder-only transformer.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub init_std: f64,
    pub dtype: Dtype,
    /// Output head shares the token-embedding matrix.
    pub tie_head: bool,
}

impl ModelConfig {
    /// 4 layers, 4 heads, d_model 128, d_ff 512, tied head.
    pub fn desk(vocab_size: usize, max_seq_len: usize) -> Self {
        Self {
            n_layers: 4,
            n_heads: 4,
            d_model: 128,
            d_ff: 512,
            vocab_size,
            max_seq_len,
            init_std: 0.02,
            dtype: Dtype::F32,
            tie_head: true,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return bad("layer, head and width counts must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} is not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.vocab_size == 0 || self.max_seq_len == 0 {
            return bad("vocab_size and max_seq_len must be positive".into());
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return bad(format!("init_std must be positive, got {}", self.init_std));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("n_layers", self.n_layers);
        kv.set("n_heads", self.n_heads);
        kv.set("d_model", self.d_model);
        kv.set("d_ff", self.d_ff);
        kv.set("vocab_size", self.vocab_size);
        kv.set("max_seq_len", self.max_seq_len);
        kv.set("init_std", self.init_std);
        kv.set("dtype", self.dtype);
        kv.set("tie_head", self.tie_head);
        kv
    }

    /// Reads every field; `base` supplies values for absent keys.
    pub fn from_kv(kv: &KvConfig, base: &ModelConfig) -> Result<Self, KvError> {
        kv.check_keys(&["n_layers", "n_heads", "d_model", "d_ff", "vocab_size", "max_seq_len", "init_std", "dtype", "tie_head"])?;
        Ok(Self {
            n_layers: kv.get_or("n_layers", base.n_layers)?,
            n_heads: kv.get_or("n_heads", base.n_heads)?,
            d_model: kv.get_or("d_model", base.d_model)?,
            d_ff: kv.get_or("d_ff", base.d_ff)?,
            vocab_size: kv.get_or("vocab_size", base.vocab_size)?,
            max_seq_len: kv.get_or("max_seq_len", base.max_seq_len)?,
            init_std: kv.get_or("init_std", base.init_std)?,
            dtype: kv.get_or("dtype", base.dtype)?,
            tie_head: kv.get_or("tie_head", base.tie_head)?,
        })
    }
}
