//! Flat parameter storage with a named tensor layout.

use std::ops::Range;

use rand_distr::{Distribution, Normal};

use crate::config::ModelConfig;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    /// Receives decoupled weight decay.
    pub decay: bool,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of one transformer block's tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub qkv_w: usize,
    pub qkv_b: usize,
    pub attn_w: usize,
    pub attn_b: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub fc_w: usize,
    pub fc_b: usize,
    pub proj_w: usize,
    pub proj_b: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub tensors: Vec<TensorInfo>,
    pub wte: usize,
    pub wpe: usize,
    pub blocks: Vec<BlockOffsets>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    pub head: Option<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (v, c, f, t) = (cfg.vocab_size, cfg.d_model, cfg.d_ff, cfg.max_seq_len);
        let mut tensors = Vec::new();
        let mut total = 0;
        let mut add = |name: String, shape: Vec<usize>, decay: bool| {
            let info = TensorInfo { name, shape, offset: total, decay };
            total += info.len();
            let off = info.offset;
            tensors.push(info);
            off
        };
        let wte = add("wte".into(), vec![v, c], true);
        let wpe = add("wpe".into(), vec![t, c], true);
        let mut blocks = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let p = |s: &str| format!("h{l}.{s}");
            blocks.push(BlockOffsets {
                ln1_g: add(p("ln1.g"), vec![c], false),
                ln1_b: add(p("ln1.b"), vec![c], false),
                qkv_w: add(p("attn.qkv.w"), vec![c, 3 * c], true),
                qkv_b: add(p("attn.qkv.b"), vec![3 * c], false),
                attn_w: add(p("attn.proj.w"), vec![c, c], true),
                attn_b: add(p("attn.proj.b"), vec![c], false),
                ln2_g: add(p("ln2.g"), vec![c], false),
                ln2_b: add(p("ln2.b"), vec![c], false),
                fc_w: add(p("mlp.fc.w"), vec![c, f], true),
                fc_b: add(p("mlp.fc.b"), vec![f], false),
                proj_w: add(p("mlp.proj.w"), vec![f, c], true),
                proj_b: add(p("mlp.proj.b"), vec![c], false),
            });
        }
        let lnf_g = add("lnf.g".into(), vec![c], false);
        let lnf_b = add("lnf.b".into(), vec![c], false);
        let head = (!cfg.tie_head).then(|| add("head.w".into(), vec![c, v], true));
        Self { tensors, wte, wpe, blocks, lnf_g, lnf_b, head, total }
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Normal(0, init_std) matrices, with residual-stream output projections
/// scaled by 1/sqrt(2 * n_layers); unit layer-norm gains; zero biases.
pub fn init_params<S: Scalar>(cfg: &ModelConfig, layout: &Layout, seed: u64) -> Vec<S> {
    let mut rng = lookahead_core::seed::rng(seed);
    let mut data = vec![S::zero(); layout.total];
    let resid_std = cfg.init_std / (2.0 * cfg.n_layers as f64).sqrt();
    for t in &layout.tensors {
        let range = t.range();
        if t.name.ends_with(".g") {
            data[range].fill(S::one());
        } else if t.shape.len() == 2 {
            let std = if t.name.ends_with("attn.proj.w") || t.name.ends_with("mlp.proj.w") {
                resid_std
            } else {
                cfg.init_std
            };
            let normal = Normal::new(0.0, std).expect("positive std");
            for x in &mut data[range] {
                *x = S::lit(normal.sample(&mut rng));
            }
        }
    }
    data
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_contiguous() {
        let cfg = ModelConfig { tie_head: false, ..ModelConfig::desk(11, 6) };
        let layout = Layout::new(&cfg);
        let mut next = 0;
        for t in &layout.tensors {
            assert_eq!(t.offset, next);
            next += t.len();
        }
        assert_eq!(next, layout.total);
        assert!(layout.head.is_some());
        assert_eq!(layout.tensor("h3.mlp.fc.w").unwrap().shape, vec![128, 512]);
    }

    #[test]
    fn init_is_seeded_and_finite() {
        let cfg = ModelConfig::desk(20, 8);
        let layout = Layout::new(&cfg);
        let a: Vec<f32> = init_params(&cfg, &layout, 3);
        let b: Vec<f32> = init_params(&cfg, &layout, 3);
        assert_eq!(a, b);
        assert!(a.iter().all(|x| x.is_finite()));
        let g = layout.tensor("h0.ln1.g").unwrap();
        assert!(a[g.range()].iter().all(|&x| x == 1.0));
    }
}
