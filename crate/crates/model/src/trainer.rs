//! Teacher-forced training over a mixture of (possibly augmented) sequences.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use lookahead_core::kv::{KvConfig, KvError};
use lookahead_core::seed;
use lookahead_core::{AugmentedSequence, Vocab};
use rand::seq::SliceRandom;

use crate::adamw::{clip_grad_norm, AdamWConfig, AdamWState};
use crate::checkpoint::Checkpoint;
use crate::error::ModelError;
use crate::scalar::Scalar;
use crate::schedule::LinearSchedule;
use crate::transformer::{Batch, Transformer};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seed of the per-epoch shuffle.
    pub seed: u64,
    pub warmup: u64,
    /// Global-norm clip; 0 disables.
    pub grad_clip: f64,
    /// Checkpoint interval in steps; 0 checkpoints only at the end.
    pub eval_every: u64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            epochs: 1,
            batch_size: 32,
            seed: 0,
            warmup: 100,
            grad_clip: 1.0,
            eval_every: 0,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

const TRAIN_KEYS: &[&str] = &[
    "lr", "epochs", "batch_size", "seed", "warmup", "grad_clip", "eval_every", "weight_decay", "beta1", "beta2", "eps",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.grad_clip < 0.0 || self.weight_decay < 0.0 {
            return bad("grad_clip and weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("lr", self.lr);
        kv.set("epochs", self.epochs);
        kv.set("batch_size", self.batch_size);
        kv.set("seed", self.seed);
        kv.set("warmup", self.warmup);
        kv.set("grad_clip", self.grad_clip);
        kv.set("eval_every", self.eval_every);
        kv.set("weight_decay", self.weight_decay);
        kv.set("beta1", self.beta1);
        kv.set("beta2", self.beta2);
        kv.set("eps", self.eps);
        kv
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self, KvError> {
        kv.check_keys(TRAIN_KEYS)?;
        let d = Self::default();
        Ok(Self {
            lr: kv.get_or("lr", d.lr)?,
            epochs: kv.get_or("epochs", d.epochs)?,
            batch_size: kv.get_or("batch_size", d.batch_size)?,
            seed: kv.get_or("seed", d.seed)?,
            warmup: kv.get_or("warmup", d.warmup)?,
            grad_clip: kv.get_or("grad_clip", d.grad_clip)?,
            eval_every: kv.get_or("eval_every", d.eval_every)?,
            weight_decay: kv.get_or("weight_decay", d.weight_decay)?,
            beta1: kv.get_or("beta1", d.beta1)?,
            beta2: kv.get_or("beta2", d.beta2)?,
            eps: kv.get_or("eps", d.eps)?,
        })
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig { beta1: self.beta1, beta2: self.beta2, eps: self.eps, weight_decay: self.weight_decay }
    }
}

/// Model input for a target sequence: `<bos>` followed by all but the last
/// target.
pub fn shift_right(ids: &[u32]) -> Vec<u32> {
    let mut input = Vec::with_capacity(ids.len());
    input.push(Vocab::BOS);
    input.extend_from_slice(&ids[..ids.len().saturating_sub(1)]);
    input
}

/// Shuffles with `seed`, groups into batches of `batch_size` and right-pads
/// each batch to its longest sequence. Pad targets are masked out.
pub fn batchify(data: &[AugmentedSequence], batch_size: usize, pad_id: u32, seed: u64) -> Vec<Batch> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seed::rng(seed));
    order
        .chunks(batch_size.max(1))
        .map(|idx| {
            let seq_len = idx.iter().map(|&i| data[i].ids.len()).max().unwrap_or(0);
            let rows = idx.len();
            let mut batch = Batch {
                rows,
                seq_len,
                inputs: vec![pad_id; rows * seq_len],
                targets: vec![pad_id; rows * seq_len],
                mask: vec![0; rows * seq_len],
            };
            for (r, &i) in idx.iter().enumerate() {
                let s = &data[i];
                let len = s.ids.len();
                let base = r * seq_len;
                batch.inputs[base..base + len].copy_from_slice(&shift_right(&s.ids));
                batch.targets[base..base + len].copy_from_slice(&s.ids);
                batch.mask[base..base + len].copy_from_slice(&s.loss_mask);
            }
            batch
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub masked_tokens: usize,
}

pub const METRICS_HEADER: &str = "step,epoch,lr,loss,masked_tokens";

impl MetricRow {
    pub fn csv(&self) -> String {
        format!("{},{},{:.6e},{:.9},{}", self.step, self.epoch, self.lr, self.loss, self.masked_tokens)
    }
}

/// Where checkpoints and metrics go.
pub struct TrainOutput<'a> {
    pub dir: PathBuf,
    pub vocab: &'a Vocab,
    pub meta: &'a KvConfig,
}

impl TrainOutput<'_> {
    pub fn checkpoint_path(&self) -> PathBuf {
        self.dir.join("model.ckpt")
    }

    pub fn last_good_path(&self) -> PathBuf {
        self.dir.join("last_good.ckpt")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.dir.join("metrics.csv")
    }

    fn save<S: Scalar>(&self, model: &Transformer<S>, path: &Path) -> Result<(), ModelError> {
        let ck = Checkpoint { model: model.clone(), vocab: self.vocab.clone(), meta: self.meta.clone() };
        ck.save(path)
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub metrics: Vec<MetricRow>,
    pub steps: u64,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.metrics.last().map(|m| m.loss)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{METRICS_HEADER}\n");
        for m in &self.metrics {
            out.push_str(&m.csv());
            out.push('\n');
        }
        out
    }
}

/// Trains `model` in place. Every sequence must fit `max_seq_len`. On a
/// non-finite loss the pre-step parameters are written to
/// `last_good.ckpt` (when `out` is given) and the error is returned.
pub fn train<S: Scalar>(
    model: &mut Transformer<S>,
    data: &[AugmentedSequence],
    cfg: &TrainConfig,
    out: Option<&TrainOutput<'_>>,
    mut on_step: impl FnMut(&MetricRow),
) -> Result<TrainReport, ModelError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ModelError::Config("training set is empty".into()));
    }
    if let Some(s) = data.iter().find(|s| s.ids.len() > model.config.max_seq_len) {
        return Err(ModelError::SequenceTooLong { len: s.ids.len(), max: model.config.max_seq_len });
    }
    let steps_per_epoch = data.len().div_ceil(cfg.batch_size) as u64;
    let total = steps_per_epoch * cfg.epochs as u64;
    let schedule = LinearSchedule { peak: cfg.lr, warmup: cfg.warmup, total };
    let mut opt = AdamWState::new(cfg.adamw(), &model.layout);
    let mut metrics_file = match out {
        Some(o) => {
            fs::create_dir_all(&o.dir)?;
            let mut f = fs::File::create(o.metrics_path())?;
            writeln!(f, "{METRICS_HEADER}")?;
            Some(f)
        }
        None => None,
    };

    let mut metrics = Vec::with_capacity(total as usize);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let batches = batchify(data, cfg.batch_size, Vocab::PAD, seed::index_seed(cfg.seed, epoch as u64));
        for batch in &batches {
            let lr = schedule.lr(step);
            let (loss, mut grads) = match model.loss_and_grad(batch) {
                Ok(r) => r,
                Err(e @ ModelError::NonFiniteLoss { .. }) => {
                    if let Some(o) = out {
                        o.save(model, &o.last_good_path())?;
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            clip_grad_norm(&mut grads, cfg.grad_clip);
            opt.step(&mut model.params, &grads, lr);
            let row = MetricRow { step, epoch, lr, loss: loss.as_f64(), masked_tokens: batch.masked_count() };
            if let Some(f) = metrics_file.as_mut() {
                writeln!(f, "{}", row.csv())?;
            }
            on_step(&row);
            metrics.push(row);
            step += 1;
            if let Some(o) = out {
                if cfg.eval_every > 0 && step.is_multiple_of(cfg.eval_every) && step < total {
                    o.save(model, &o.checkpoint_path())?;
                }
            }
        }
    }
    if let Some(o) = out {
        o.save(model, &o.checkpoint_path())?;
    }
    Ok(TrainReport { metrics, steps: step })
}
