//! Pre-norm decoder-only transformer with learned positions and a
//! hand-written reverse pass.

use crate::config::ModelConfig;
use crate::error::ModelError;
use crate::loss::masked_cross_entropy;
use crate::ops::{self, AttnShape, LnCache};
use crate::params::{init_params, Layout};
use crate::scalar::{gemm, Mat, Scalar};

/// A padded batch: `inputs[r * t + j]` predicts `targets[r * t + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub rows: usize,
    pub seq_len: usize,
    pub inputs: Vec<u32>,
    pub targets: Vec<u32>,
    pub mask: Vec<u8>,
}

impl Batch {
    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m != 0).count()
    }
}

struct BlockCache<S> {
    x_in: Vec<S>,
    ln1: LnCache<S>,
    qkv: Vec<S>,
    att: Vec<S>,
    att_y: Vec<S>,
    x_mid: Vec<S>,
    ln2: LnCache<S>,
    fc_pre: Vec<S>,
    fc_act: Vec<S>,
}

/// Activations retained for the backward pass.
pub struct Forward<S> {
    rows: usize,
    seq_len: usize,
    inputs: Vec<u32>,
    blocks: Vec<BlockCache<S>>,
    x_final: Vec<S>,
    lnf: LnCache<S>,
    /// `[rows * seq_len, vocab]`.
    pub logits: Vec<S>,
}

#[derive(Clone, Debug)]
pub struct Transformer<S> {
    pub config: ModelConfig,
    pub layout: Layout,
    pub params: Vec<S>,
}

impl<S: Scalar> Transformer<S> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let params = init_params(&config, &layout, seed);
        Ok(Self { config, layout, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<S>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(ModelError::Shape(format!("expected {} parameters, got {}", layout.total, params.len())));
        }
        Ok(Self { config, layout, params })
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    fn p(&self, off: usize, len: usize) -> &[S] {
        &self.params[off..off + len]
    }

    fn check_inputs(&self, inputs: &[u32], rows: usize, seq_len: usize) -> Result<(), ModelError> {
        if seq_len > self.config.max_seq_len {
            return Err(ModelError::SequenceTooLong { len: seq_len, max: self.config.max_seq_len });
        }
        if inputs.len() != rows * seq_len {
            return Err(ModelError::Shape(format!("{} ids for a {rows}x{seq_len} batch", inputs.len())));
        }
        if let Some(&id) = inputs.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(ModelError::TokenOutOfRange { id, vocab: self.config.vocab_size });
        }
        Ok(())
    }

    /// Full forward pass; logits for every position.
    pub fn forward(&self, inputs: &[u32], rows: usize, seq_len: usize) -> Result<Forward<S>, ModelError> {
        self.check_inputs(inputs, rows, seq_len)?;
        let cfg = &self.config;
        let (c, f, v) = (cfg.d_model, cfg.d_ff, cfg.vocab_size);
        let n = rows * seq_len;
        let shape = AttnShape { b: rows, t: seq_len, c, h: cfg.n_heads };

        let mut x = vec![S::zero(); n * c];
        let wte = self.p(self.layout.wte, v * c);
        let wpe = self.p(self.layout.wpe, cfg.max_seq_len * c);
        for (r, &id) in inputs.iter().enumerate() {
            let pos = r % seq_len;
            let row = &mut x[r * c..(r + 1) * c];
            let (e, pe) = (&wte[id as usize * c..][..c], &wpe[pos * c..][..c]);
            for i in 0..c {
                row[i] = e[i] + pe[i];
            }
        }

        let mut blocks = Vec::with_capacity(cfg.n_layers);
        for o in &self.layout.blocks {
            let ln1 = ops::layernorm_forward(&x, self.p(o.ln1_g, c), self.p(o.ln1_b, c), n, c);
            let qkv = ops::linear_forward(&ln1.out, self.p(o.qkv_w, c * 3 * c), self.p(o.qkv_b, 3 * c), n, c, 3 * c);
            let (att, att_y) = ops::attention_forward(&qkv, shape);
            let mut x_mid = ops::linear_forward(&att_y, self.p(o.attn_w, c * c), self.p(o.attn_b, c), n, c, c);
            ops::add_in_place(&mut x_mid, &x);
            let ln2 = ops::layernorm_forward(&x_mid, self.p(o.ln2_g, c), self.p(o.ln2_b, c), n, c);
            let fc_pre = ops::linear_forward(&ln2.out, self.p(o.fc_w, c * f), self.p(o.fc_b, f), n, c, f);
            let fc_act = ops::gelu_forward(&fc_pre);
            let mut x_out = ops::linear_forward(&fc_act, self.p(o.proj_w, f * c), self.p(o.proj_b, c), n, f, c);
            ops::add_in_place(&mut x_out, &x_mid);
            let x_in = std::mem::replace(&mut x, x_out);
            blocks.push(BlockCache { x_in, ln1, qkv, att, att_y, x_mid, ln2, fc_pre, fc_act });
        }

        let lnf = ops::layernorm_forward(&x, self.p(self.layout.lnf_g, c), self.p(self.layout.lnf_b, c), n, c);
        let logits = self.head_forward(&lnf.out, n);
        Ok(Forward { rows, seq_len, inputs: inputs.to_vec(), blocks, x_final: x, lnf, logits })
    }

    fn head_forward(&self, h: &[S], n: usize) -> Vec<S> {
        let (c, v) = (self.config.d_model, self.config.vocab_size);
        let mut logits = vec![S::zero(); n * v];
        match self.layout.head {
            None => {
                let wte = self.p(self.layout.wte, v * c);
                gemm(n, c, v, S::one(), Mat::rows(h, c), Mat::t(wte, c), S::zero(), &mut logits, v);
            }
            Some(off) => {
                gemm(n, c, v, S::one(), Mat::rows(h, c), Mat::rows(self.p(off, c * v), v), S::zero(), &mut logits, v);
            }
        }
        logits
    }

    /// Logits at the final position of a single context.
    pub fn next_logits(&self, context: &[u32]) -> Result<Vec<S>, ModelError> {
        let fwd = self.forward(context, 1, context.len())?;
        let v = self.config.vocab_size;
        let last = context.len() - 1;
        Ok(fwd.logits[last * v..(last + 1) * v].to_vec())
    }

    /// Reverse pass from `dlogits`; returns gradients in parameter layout.
    pub fn backward(&self, fwd: &Forward<S>, dlogits: &[S]) -> Vec<S> {
        let cfg = &self.config;
        let (c, f, v) = (cfg.d_model, cfg.d_ff, cfg.vocab_size);
        let n = fwd.rows * fwd.seq_len;
        let shape = AttnShape { b: fwd.rows, t: fwd.seq_len, c, h: cfg.n_heads };
        let mut grads = vec![S::zero(); self.layout.total];

        // output head
        let mut dh = vec![S::zero(); n * c];
        match self.layout.head {
            None => {
                let wte = self.p(self.layout.wte, v * c);
                gemm(n, v, c, S::one(), Mat::rows(dlogits, v), Mat::rows(wte, c), S::zero(), &mut dh, c);
                let dwte = &mut grads[self.layout.wte..self.layout.wte + v * c];
                gemm(v, n, c, S::one(), Mat::t(dlogits, v), Mat::rows(&fwd.lnf.out, c), S::one(), dwte, c);
            }
            Some(off) => {
                let w = self.p(off, c * v);
                gemm(n, v, c, S::one(), Mat::rows(dlogits, v), Mat::t(w, v), S::zero(), &mut dh, c);
                let dw = &mut grads[off..off + c * v];
                gemm(c, n, v, S::one(), Mat::t(&fwd.lnf.out, c), Mat::rows(dlogits, v), S::one(), dw, v);
            }
        }

        let mut dx = vec![S::zero(); n * c];
        {
            let (g_off, b_off) = (self.layout.lnf_g, self.layout.lnf_b);
            let (head, tail) = grads.split_at_mut(b_off);
            ops::layernorm_backward(
                &dh,
                &fwd.x_final,
                self.p(g_off, c),
                &fwd.lnf,
                &mut dx,
                &mut head[g_off..g_off + c],
                &mut tail[..c],
                n,
                c,
            );
        }

        for (o, cache) in self.layout.blocks.iter().zip(&fwd.blocks).rev() {
            // MLP
            let dfc_act = {
                let (dw, db) = split_pair(&mut grads, o.proj_w, f * c, o.proj_b, c);
                ops::linear_backward(&dx, &cache.fc_act, self.p(o.proj_w, f * c), dw, db, n, f, c)
            };
            let dfc_pre = ops::gelu_backward(&cache.fc_pre, &dfc_act);
            let dln2 = {
                let (dw, db) = split_pair(&mut grads, o.fc_w, c * f, o.fc_b, f);
                ops::linear_backward(&dfc_pre, &cache.ln2.out, self.p(o.fc_w, c * f), dw, db, n, c, f)
            };
            {
                let (dg, db) = split_pair(&mut grads, o.ln2_g, c, o.ln2_b, c);
                ops::layernorm_backward(&dln2, &cache.x_mid, self.p(o.ln2_g, c), &cache.ln2, &mut dx, dg, db, n, c);
            }
            // attention
            let datt_y = {
                let (dw, db) = split_pair(&mut grads, o.attn_w, c * c, o.attn_b, c);
                ops::linear_backward(&dx, &cache.att_y, self.p(o.attn_w, c * c), dw, db, n, c, c)
            };
            let dqkv = ops::attention_backward(&datt_y, &cache.qkv, &cache.att, shape);
            let dln1 = {
                let (dw, db) = split_pair(&mut grads, o.qkv_w, c * 3 * c, o.qkv_b, 3 * c);
                ops::linear_backward(&dqkv, &cache.ln1.out, self.p(o.qkv_w, c * 3 * c), dw, db, n, c, 3 * c)
            };
            {
                let (dg, db) = split_pair(&mut grads, o.ln1_g, c, o.ln1_b, c);
                ops::layernorm_backward(&dln1, &cache.x_in, self.p(o.ln1_g, c), &cache.ln1, &mut dx, dg, db, n, c);
            }
        }

        // embeddings
        for (r, &id) in fwd.inputs.iter().enumerate() {
            let pos = r % fwd.seq_len;
            let d = &dx[r * c..(r + 1) * c];
            let te = self.layout.wte + id as usize * c;
            for (g, &x) in grads[te..te + c].iter_mut().zip(d) {
                *g += x;
            }
            let pe = self.layout.wpe + pos * c;
            for (g, &x) in grads[pe..pe + c].iter_mut().zip(d) {
                *g += x;
            }
        }
        grads
    }

    /// Masked cross-entropy loss of a batch.
    pub fn loss(&self, batch: &Batch) -> Result<S, ModelError> {
        let fwd = self.forward(&batch.inputs, batch.rows, batch.seq_len)?;
        let (loss, _) = masked_cross_entropy(&fwd.logits, &batch.targets, &batch.mask, self.config.vocab_size)?;
        self.check_finite(loss, batch)?;
        Ok(loss)
    }

    /// Loss and parameter gradients of a batch.
    pub fn loss_and_grad(&self, batch: &Batch) -> Result<(S, Vec<S>), ModelError> {
        let fwd = self.forward(&batch.inputs, batch.rows, batch.seq_len)?;
        let (loss, dlogits) = masked_cross_entropy(&fwd.logits, &batch.targets, &batch.mask, self.config.vocab_size)?;
        self.check_finite(loss, batch)?;
        Ok((loss, self.backward(&fwd, &dlogits)))
    }

    fn check_finite(&self, loss: S, batch: &Batch) -> Result<(), ModelError> {
        if loss.is_finite() {
            Ok(())
        } else {
            Err(ModelError::NonFiniteLoss {
                loss: loss.as_f64(),
                rows: batch.rows,
                seq_len: batch.seq_len,
                targets: batch.masked_count(),
            })
        }
    }
}

/// Two disjoint mutable windows `[a, a + la)` and `[b, b + lb)` with `a < b`.
fn split_pair<S>(buf: &mut [S], a: usize, la: usize, b: usize, lb: usize) -> (&mut [S], &mut [S]) {
    assert!(a + la <= b, "windows must be ordered and disjoint");
    let (head, tail) = buf.split_at_mut(b);
    (&mut head[a..a + la], &mut tail[..lb])
}
