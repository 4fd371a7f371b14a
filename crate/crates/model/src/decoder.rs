//! Greedy / sampled decoding in three modes: plain autoregressive,
//! `<T>`-generated (the model writes the lookahead span) and
//! `<T>`-specified (the caller supplies it).

use std::fmt;
use std::str::FromStr;

use lookahead_core::seed;
use lookahead_core::Vocab;
use rand::Rng;
use thiserror::Error;

use crate::error::ModelError;
use crate::ops::softmax_in_place;
use crate::scalar::Scalar;
use crate::transformer::Transformer;

pub const DEFAULT_Z_CAP: usize = 64;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid decode request: {0}")]
    Request(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    Autoregressive,
    TGenerated,
    TSpecified(Vec<u32>),
}

impl DecodeMode {
    pub fn name(&self) -> &'static str {
        match self {
            DecodeMode::Autoregressive => "ar",
            DecodeMode::TGenerated => "tgen",
            DecodeMode::TSpecified(_) => "tspec",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Strategy {
    Greedy,
    Sample { temperature: f64, seed: u64 },
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Greedy => f.write_str("greedy"),
            Strategy::Sample { temperature, seed } => write!(f, "sample:{temperature}:{seed}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    /// `greedy` or `sample:<temperature>:<seed>`.
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "greedy" {
            return Ok(Strategy::Greedy);
        }
        let parts: Vec<&str> = s.split(':').collect();
        match parts[..] {
            ["sample", t, sd] => {
                let temperature: f64 = t.parse().map_err(|_| format!("bad temperature {t:?}"))?;
                let seed = sd.parse().map_err(|_| format!("bad seed {sd:?}"))?;
                if !(temperature > 0.0 && temperature.is_finite()) {
                    return Err("temperature must be positive".into());
                }
                Ok(Strategy::Sample { temperature, seed })
            }
            _ => Err(format!("expected greedy or sample:<temperature>:<seed>, found {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeRequest {
    pub mode: DecodeMode,
    /// Conditioning prefix, without `<bos>`.
    pub prompt: Vec<u32>,
    /// Number of completion tokens emitted before `<T>` is injected.
    pub decision_offset: Option<usize>,
    pub max_new_tokens: usize,
    pub strategy: Strategy,
    pub z_cap: usize,
}

impl DecodeRequest {
    pub fn new(mode: DecodeMode, prompt: Vec<u32>, decision_offset: Option<usize>, max_new_tokens: usize) -> Self {
        Self { mode, prompt, decision_offset, max_new_tokens, strategy: Strategy::Greedy, z_cap: DEFAULT_Z_CAP }
    }

    fn validate(&self, vocab_size: usize) -> Result<(), DecodeError> {
        let bad = |m: String| Err(DecodeError::Request(m));
        if self.prompt.is_empty() {
            return bad("prompt is empty".into());
        }
        match &self.mode {
            DecodeMode::Autoregressive => {}
            DecodeMode::TGenerated if self.decision_offset.is_none() => {
                return bad("t_generated needs a decision offset".into());
            }
            DecodeMode::TSpecified(z) => {
                if self.decision_offset.is_none() {
                    return bad("t_specified needs a decision offset".into());
                }
                if z.is_empty() {
                    return bad("specified z is empty".into());
                }
                if let Some(&id) = z.iter().find(|&&id| Vocab::is_reserved(id)) {
                    return bad(format!("specified z contains reserved token id {id}"));
                }
                if let Some(&id) = z.iter().find(|&&id| id as usize >= vocab_size) {
                    return bad(format!("specified z contains out-of-range id {id}"));
                }
            }
            DecodeMode::TGenerated => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeOutput {
    /// Everything generated after the prompt, specials included, EOS
    /// excluded.
    pub raw: Vec<u32>,
    /// Content of the first lookahead span, if one was opened.
    pub z: Option<Vec<u32>>,
    /// A span was closed by the decoder rather than by the model.
    pub force_closed: bool,
    /// Generation stopped at `max_new_tokens` or the context limit.
    pub truncated: bool,
}

impl DecodeOutput {
    pub fn stripped(&self) -> Vec<u32> {
        lookahead_core::augment::strip_ids(&self.raw)
    }
}

/// Decodes against a borrowed model; read-only, so one model can serve
/// many decoders.
pub struct Decoder<'a, S> {
    model: &'a Transformer<S>,
}

impl<'a, S: Scalar> Decoder<'a, S> {
    pub fn new(model: &'a Transformer<S>) -> Self {
        Self { model }
    }

    pub fn decode(&self, req: &DecodeRequest) -> Result<DecodeOutput, DecodeError> {
        let v = self.model.config.vocab_size;
        req.validate(v)?;
        let max_ctx = self.model.config.max_seq_len;
        let mut ctx = Vec::with_capacity(max_ctx);
        ctx.push(Vocab::BOS);
        ctx.extend_from_slice(&req.prompt);
        if ctx.len() > max_ctx {
            return Err(ModelError::SequenceTooLong { len: ctx.len(), max: max_ctx }.into());
        }
        let mut out = DecodeOutput { raw: Vec::new(), z: None, force_closed: false, truncated: false };
        if req.prompt.last() == Some(&Vocab::EOS) {
            return Ok(out);
        }
        let mut rng = match req.strategy {
            Strategy::Sample { seed: s, .. } => Some(seed::rng(s)),
            Strategy::Greedy => None,
        };
        let inject_at = match req.mode {
            DecodeMode::Autoregressive => None,
            _ => req.decision_offset,
        };
        // completion tokens outside any span
        let mut emitted = 0usize;
        let mut span: Option<Vec<u32>> = None;
        let mut injected = false;

        loop {
            if inject_at == Some(emitted) && !injected && span.is_none() {
                injected = true;
                if let DecodeMode::TSpecified(z) = &req.mode {
                    let mut splice = vec![Vocab::T_OPEN];
                    splice.extend_from_slice(z);
                    splice.push(Vocab::T_CLOSE);
                    if ctx.len() + splice.len() > max_ctx {
                        out.truncated = true;
                        break;
                    }
                    ctx.extend_from_slice(&splice);
                    out.raw.extend_from_slice(&splice);
                    out.z.get_or_insert_with(|| z.clone());
                    continue;
                }
                self.push(&mut ctx, &mut out, Vocab::T_OPEN);
                span = Some(Vec::new());
                continue;
            }
            if out.raw.len() >= req.max_new_tokens || ctx.len() >= max_ctx {
                out.truncated = true;
                break;
            }
            if let Some(z) = &span {
                if z.len() >= req.z_cap {
                    let z = span.take().unwrap();
                    self.close_span(&mut ctx, &mut out, z, true);
                    continue;
                }
            }
            let mut logits: Vec<f64> = self.model.next_logits(&ctx)?.into_iter().map(|x| x.as_f64()).collect();
            for id in [Vocab::BOS, Vocab::PAD] {
                logits[id as usize] = f64::NEG_INFINITY;
            }
            if span.is_some() {
                logits[Vocab::T_OPEN as usize] = f64::NEG_INFINITY;
                logits[Vocab::EOS as usize] = f64::NEG_INFINITY;
            } else {
                logits[Vocab::T_CLOSE as usize] = f64::NEG_INFINITY;
                if injected || inject_at.is_some() {
                    // single span per sequence in the `<T>` modes
                    logits[Vocab::T_OPEN as usize] = f64::NEG_INFINITY;
                }
            }
            let tok = pick(&mut logits, req.strategy, rng.as_mut());
            match (&mut span, tok) {
                (_, Vocab::EOS) => break,
                (Some(_), Vocab::T_CLOSE) => {
                    let z = span.take().unwrap();
                    self.close_span(&mut ctx, &mut out, z, false);
                }
                (Some(z), t) => {
                    z.push(t);
                    self.push(&mut ctx, &mut out, t);
                }
                (None, Vocab::T_OPEN) => {
                    self.push(&mut ctx, &mut out, tok);
                    span = Some(Vec::new());
                }
                (None, t) => {
                    self.push(&mut ctx, &mut out, t);
                    emitted += 1;
                }
            }
        }
        if let Some(z) = span.take() {
            // unterminated at a hard limit; close so the output stays well formed
            out.raw.push(Vocab::T_CLOSE);
            out.force_closed = true;
            out.z.get_or_insert(z);
        }
        Ok(out)
    }

    fn push(&self, ctx: &mut Vec<u32>, out: &mut DecodeOutput, tok: u32) {
        ctx.push(tok);
        out.raw.push(tok);
    }

    fn close_span(&self, ctx: &mut Vec<u32>, out: &mut DecodeOutput, z: Vec<u32>, forced: bool) {
        self.push(ctx, out, Vocab::T_CLOSE);
        out.force_closed |= forced;
        out.z.get_or_insert(z);
    }
}

fn pick(logits: &mut [f64], strategy: Strategy, rng: Option<&mut seed::Rng>) -> u32 {
    match (strategy, rng) {
        (Strategy::Sample { temperature, .. }, Some(rng)) => {
            for x in logits.iter_mut() {
                *x /= temperature;
            }
            softmax_in_place(logits);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, &p) in logits.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i as u32;
                }
            }
            logits.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u32
        }
        _ => argmax(logits),
    }
}

/// First index of the maximum.
pub fn argmax(xs: &[f64]) -> u32 {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best as u32
}
