//! Lookahead-span augmentation.
//!
//! A sequence `y_1 .. y_T` becomes `y_1 .. y_d <T> z </T> y_{d+1} .. y_T`
//! where `z` is information about the future: a verbatim copy of later tokens
//! (copy schema) or a templated sentence naming a later sentence and its
//! distance (copy+pos schema). The model is never trained to emit `<T>` (its
//! target is masked out of the loss) but is trained to emit `</T>`, which is
//! what lets it close a span it was asked to open at inference time.

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::str::FromStr;

use rand::Rng as _;
use thiserror::Error;

use crate::example::{EncodedExample, Example};
use crate::kv::{KvConfig, KvError};
use crate::scc::{self, SccTrace};
use crate::seed::{self, Rng};
use crate::stargraph::Node;
use crate::vocab::{Sequence, TokenId, Vocab, VocabError};

pub const DEFAULT_ZETA: &str = "I want the [k]-th sentence from here to be [s]";

#[derive(Debug, Error)]
pub enum AugError {
    #[error("copy span violates d < s <= T-k: d={d}, s={s}, k={k}, T={len} (s is 1-based)")]
    Constraint { d: usize, s: usize, k: usize, len: usize },
    #[error("copy+pos span out of range: d={d}, k={k}, sentences={sentences}")]
    SentenceRange { d: usize, k: usize, sentences: usize },
    #[error("path of {0} nodes leaves no room for a span between v1 and the goal")]
    PathTooShort(usize),
    #[error("fixed span path[{offset}..{end}) does not fit strictly between v1 and the goal of a {len}-node path")]
    FixedOutOfRange { offset: usize, end: usize, len: usize },
    #[error("trace has {0} snapshots; at least 2 are needed")]
    TraceTooShort(usize),
    #[error("policy {policy} is not defined for task {task}")]
    PolicyForTask { policy: Policy, task: &'static str },
    #[error("invalid augmentation spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("malformed augmented record on line {line}: {reason}")]
    Record { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

macro_rules! kv_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($name::$variant => $text),+ })
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!("expected one of: {}", [$($text),+].join(", "))),
                }
            }
        }
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Schema {
    Copy,
    CopyPos,
}
kv_enum!(Schema { Copy => "copy", CopyPos => "copy_pos" });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    Fixed,
    Random,
    RuleBased,
}
kv_enum!(Policy { Fixed => "fixed", Random => "random", RuleBased => "rule_based" });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossScope {
    All,
    CompletionOnly,
}
kv_enum!(LossScope { All => "all", CompletionOnly => "completion_only" });

/// Fixed-policy span over path indices: `path[offset .. offset + len)`.
/// `len = None` picks `min(4, n - 3)` for an `n`-node path, i.e. the longest
/// span of at most four nodes that starts at `v_2` and stops before the goal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FixedSpan {
    pub offset: usize,
    pub len: Option<usize>,
}

impl Default for FixedSpan {
    fn default() -> Self {
        Self { offset: 2, len: None }
    }
}

impl FixedSpan {
    pub fn range_for(&self, path_len: usize) -> Result<Range<usize>, AugError> {
        if path_len < 4 {
            return Err(AugError::PathTooShort(path_len));
        }
        let len = self.len.unwrap_or_else(|| 4.min(path_len - 3));
        let end = self.offset + len;
        if len == 0 || self.offset < 2 || end > path_len - 1 {
            return Err(AugError::FixedOutOfRange { offset: self.offset, end, len: path_len });
        }
        Ok(self.offset..end)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugSpec {
    pub schema: Schema,
    pub policy: Policy,
    /// Probability of keeping an example unaugmented.
    pub p: f64,
    pub fixed: FixedSpan,
    pub zeta: String,
    pub loss_scope: LossScope,
    pub explicit_pos: bool,
}

impl Default for AugSpec {
    fn default() -> Self {
        Self {
            schema: Schema::Copy,
            policy: Policy::Random,
            p: 0.5,
            fixed: FixedSpan::default(),
            zeta: DEFAULT_ZETA.to_string(),
            loss_scope: LossScope::CompletionOnly,
            explicit_pos: false,
        }
    }
}

const AUG_KEYS: &[&str] = &["schema", "policy", "p", "fixed.offset", "fixed.len", "zeta", "loss_scope", "explicit_pos"];

impl AugSpec {
    pub fn validate(&self) -> Result<(), AugError> {
        if !(0.0..=1.0).contains(&self.p) || self.p.is_nan() {
            return Err(AugError::Spec(format!("p = {} is outside [0, 1]", self.p)));
        }
        if self.fixed.len == Some(0) {
            return Err(AugError::Spec("fixed.len must be >= 1".into()));
        }
        if self.fixed.offset < 2 {
            return Err(AugError::Spec("fixed.offset must be >= 2 so the span never contains v1".into()));
        }
        if self.schema == Schema::CopyPos && !self.zeta.split_whitespace().any(|w| w == "[s]") {
            return Err(AugError::Spec("zeta template must contain a standalone [s] word".into()));
        }
        Ok(())
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self, AugError> {
        kv.check_keys(AUG_KEYS)?;
        let d = Self::default();
        let fixed_len = match kv.get_str("fixed.len") {
            None | Some("auto") => None,
            Some(_) => Some(kv.require::<usize>("fixed.len")?),
        };
        let spec = Self {
            schema: kv.get_or("schema", d.schema)?,
            policy: kv.get_or("policy", d.policy)?,
            p: kv.get_or("p", d.p)?,
            fixed: FixedSpan { offset: kv.get_or("fixed.offset", d.fixed.offset)?, len: fixed_len },
            zeta: kv.get_str("zeta").map_or(d.zeta, str::to_string),
            loss_scope: kv.get_or("loss_scope", d.loss_scope)?,
            explicit_pos: kv.get_or("explicit_pos", d.explicit_pos)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("schema", self.schema);
        kv.set("policy", self.policy);
        kv.set("p", self.p);
        kv.set("fixed.offset", self.fixed.offset);
        kv.set("fixed.len", self.fixed.len.map_or("auto".to_string(), |l| l.to_string()));
        kv.set("zeta", &self.zeta);
        kv.set("loss_scope", self.loss_scope);
        kv.set("explicit_pos", self.explicit_pos);
        kv
    }
}

/// Positions of `<T>` and `</T>` inside an augmented sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub open: usize,
    pub close: usize,
}

/// Training record: target ids, a 0/1 loss weight per target, and where the
/// lookahead span sits (if any).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AugmentedSequence {
    pub ids: Sequence,
    pub loss_mask: Vec<u8>,
    pub span: Option<Span>,
    /// Index of the source example.
    pub origin: usize,
}

impl AugmentedSequence {
    pub fn plain(ids: Sequence, origin: usize, scope: LossScope, prefix_len: usize) -> Self {
        let loss_mask = make_loss_mask(&ids, scope, prefix_len);
        Self { ids, loss_mask, span: None, origin }
    }

    pub fn is_augmented(&self) -> bool {
        self.span.is_some()
    }

    pub fn set_loss_scope(&mut self, scope: LossScope, prefix_len: usize) {
        self.loss_mask = make_loss_mask(&self.ids, scope, prefix_len);
    }

    /// Checks the span and mask invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        let opens: Vec<usize> = positions(&self.ids, Vocab::T_OPEN);
        let closes: Vec<usize> = positions(&self.ids, Vocab::T_CLOSE);
        match self.span {
            Some(Span { open, close }) => {
                if opens != [open] || closes != [close] || open >= close {
                    return Err(format!("span {open}..{close} disagrees with specials at {opens:?}/{closes:?}"));
                }
            }
            None if !opens.is_empty() || !closes.is_empty() => {
                return Err("unaugmented sequence contains lookahead specials".into());
            }
            None => {}
        }
        if self.loss_mask.len() != self.ids.len() {
            return Err("mask length differs from sequence length".into());
        }
        for (j, (&id, &m)) in self.ids.iter().zip(&self.loss_mask).enumerate() {
            if id == Vocab::T_OPEN && m != 0 {
                return Err(format!("target {j} is <T> but carries loss"));
            }
            if id == Vocab::T_CLOSE && m != 1 {
                return Err(format!("target {j} is </T> but is masked"));
            }
        }
        Ok(())
    }
}

fn positions(ids: &[TokenId], tok: TokenId) -> Vec<usize> {
    ids.iter().enumerate().filter(|(_, &t)| t == tok).map(|(i, _)| i).collect()
}

/// `mask[j] = 0` iff target `j` is `<T>`, or `j < prefix_len` under
/// [`LossScope::CompletionOnly`]. `</T>` targets always keep their loss.
pub fn make_loss_mask(ids: &[TokenId], scope: LossScope, prefix_len: usize) -> Vec<u8> {
    ids.iter()
        .enumerate()
        .map(|(j, &id)| {
            let in_prefix = scope == LossScope::CompletionOnly && j < prefix_len;
            u8::from(id != Vocab::T_OPEN && !in_prefix)
        })
        .collect()
}

/// Copy schema. Keeps the first `d` tokens, then inserts `<T>`, a copy of the
/// `k` tokens starting at 1-based position `s`, and `</T>`. Requires
/// `d < s <= T - k`.
pub fn augment_copy(seq: &[TokenId], d: usize, s: usize, k: usize) -> Result<AugmentedSequence, AugError> {
    let len = seq.len();
    if k < 1 || d >= s || s + k > len {
        return Err(AugError::Constraint { d, s, k, len });
    }
    let src = s - 1;
    let mut ids = Vec::with_capacity(len + k + 2);
    ids.extend_from_slice(&seq[..d]);
    ids.push(Vocab::T_OPEN);
    ids.extend_from_slice(&seq[src..src + k]);
    ids.push(Vocab::T_CLOSE);
    ids.extend_from_slice(&seq[d..]);
    let span = Span { open: d, close: d + k + 1 };
    let loss_mask = make_loss_mask(&ids, LossScope::All, 0);
    Ok(AugmentedSequence { ids: Sequence(ids), loss_mask, span: Some(span), origin: 0 })
}

/// Renders the positional wrapper: `[k]` inside any word becomes the
/// bracketed integer, and the standalone word `[s]` becomes `[ s.. ]`.
pub fn zeta_tokens<S: AsRef<str>>(template: &str, k: usize, sentence: &[S]) -> Vec<String> {
    let mut out = Vec::new();
    for word in template.split_whitespace() {
        if word == "[s]" {
            out.push("[".to_string());
            out.extend(sentence.iter().map(|t| t.as_ref().to_string()));
            out.push("]".to_string());
        } else {
            out.push(word.replace("[k]", &format!("[{k}]")));
        }
    }
    out
}

/// Every template token needed for distances `1..=max_k`, plus explicit
/// sentence markers; feed to [`Vocab::build`] alongside the corpus.
pub fn zeta_vocabulary(template: &str, max_k: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for k in 1..=max_k {
        for t in zeta_tokens::<&str>(template, k, &[]) {
            if !out.contains(&t) {
                out.push(t);
            }
        }
        out.push(position_marker(k));
    }
    out
}

pub fn position_marker(i: usize) -> String {
    format!("[{i}]")
}

/// Copy+pos schema over sentences `s_1 .. s_n`:
/// `s_1 .. s_d <T> zeta(k, s_{d+k}) </T> s_{d+1} .. s_n`. With `explicit_pos`
/// every sentence after the span is preceded by its distance marker `[i]`.
pub fn augment_copy_pos(
    sentences: &[Sequence],
    d: usize,
    k: usize,
    vocab: &Vocab,
    template: &str,
    explicit_pos: bool,
) -> Result<AugmentedSequence, AugError> {
    let n = sentences.len();
    if d < 1 || k < 1 || d + k > n {
        return Err(AugError::SentenceRange { d, k, sentences: n });
    }
    let goal = vocab.decode(&sentences[d + k - 1])?;
    let zeta = vocab.encode(&zeta_tokens(template, k, &goal))?;
    let mut ids: Vec<TokenId> = sentences[..d].iter().flat_map(|s| s.iter().copied()).collect();
    let open = ids.len();
    ids.push(Vocab::T_OPEN);
    ids.extend_from_slice(&zeta);
    let close = ids.len();
    ids.push(Vocab::T_CLOSE);
    for (i, s) in sentences[d..].iter().enumerate() {
        if explicit_pos {
            ids.extend_from_slice(&vocab.encode(&[position_marker(i + 1)])?);
        }
        ids.extend_from_slice(s);
    }
    let loss_mask = make_loss_mask(&ids, LossScope::All, 0);
    Ok(AugmentedSequence { ids: Sequence(ids), loss_mask, span: Some(Span { open, close }), origin: 0 })
}

/// Removes every `<T> .. </T>` region (inclusive). An unterminated `<T>`
/// drops everything after it.
pub fn strip_ids(ids: &[TokenId]) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(ids.len());
    let mut inside = false;
    for &id in ids {
        match (inside, id) {
            (false, Vocab::T_OPEN) => inside = true,
            (true, Vocab::T_CLOSE) => inside = false,
            (false, _) => out.push(id),
            (true, _) => {}
        }
    }
    out
}

pub fn strip_augmentation(aug: &AugmentedSequence) -> Sequence {
    Sequence(strip_ids(&aug.ids))
}

/// Token-string counterpart of [`strip_ids`].
pub fn strip_tokens<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    let mut out = Vec::new();
    let mut inside = false;
    for t in tokens {
        match (inside, t.as_ref()) {
            (false, crate::vocab::T_OPEN) => inside = true,
            (true, crate::vocab::T_CLOSE) => inside = false,
            (false, s) => out.push(s.to_string()),
            (true, _) => {}
        }
    }
    out
}

/// Chooses which path nodes go inside the span, as a range of path indices.
/// The range never contains `v_1` (index 1) or the goal (last index).
pub fn choose_span_stargraph(
    path_len: usize,
    policy: Policy,
    fixed: FixedSpan,
    rng: &mut Rng,
) -> Result<Range<usize>, AugError> {
    if path_len < 4 {
        return Err(AugError::PathTooShort(path_len));
    }
    match policy {
        Policy::Fixed => fixed.range_for(path_len),
        Policy::Random => {
            // Uniform over contiguous runs inside path[2 ..= n-2].
            let lo = 2;
            let m = path_len - 3;
            let pairs = m * (m + 1) / 2;
            let mut pick = rng.random_range(0..pairs);
            for start in 0..m {
                let runs = m - start;
                if pick < runs {
                    return Ok(lo + start..lo + start + pick + 1);
                }
                pick -= runs;
            }
            unreachable!("pick < number of runs")
        }
        Policy::RuleBased => Err(AugError::PolicyForTask { policy, task: "star graph" }),
    }
}

/// Picks the snapshot copied into the span. The decision point sits after
/// the first snapshot, so only snapshots `1..` are eligible.
pub fn choose_span_scc(trace: &SccTrace, policy: Policy, rng: &mut Rng) -> Result<usize, AugError> {
    let snaps = &trace.snapshots;
    if snaps.len() < 2 {
        return Err(AugError::TraceTooShort(snaps.len()));
    }
    match policy {
        Policy::RuleBased => Ok((1..snaps.len()).find(|&i| snaps[i] != snaps[i - 1]).unwrap_or(snaps.len() - 1)),
        Policy::Random => Ok(rng.random_range(1..snaps.len())),
        Policy::Fixed => Err(AugError::PolicyForTask { policy, task: "scc" }),
    }
}

/// Tokens between the start of the completion and the star-graph decision
/// point (`v_start ,`).
pub const STAR_DECISION_OFFSET: usize = 2;

/// Completion offset of the SCC decision point (after `t_1 ,`).
pub fn scc_decision_offset(n: usize) -> usize {
    scc::snapshot_width(n) + 1
}

/// Star-graph copy augmentation of an encoded example. `span` indexes path
/// nodes; each copied node carries its trailing comma, giving
/// `v_start , <T> z_1 , .. z_k , </T> v_1 , ..`.
pub fn augment_star_encoded(ex: &EncodedExample, span: Range<usize>) -> Result<AugmentedSequence, AugError> {
    let full = ex.full_sequence();
    let p = ex.prefix.len();
    let d = p + STAR_DECISION_OFFSET;
    let s = p + 2 * span.start + 1;
    augment_copy(&full, d, s, 2 * span.len())
}

/// SCC copy augmentation: the span holds a verbatim copy of snapshot
/// `snapshot` (brackets included).
pub fn augment_scc_encoded(ex: &EncodedExample, n: usize, snapshot: usize) -> Result<AugmentedSequence, AugError> {
    let full = ex.full_sequence();
    let p = ex.prefix.len();
    let d = p + scc_decision_offset(n);
    let s = p + scc::snapshot_offset(n, snapshot) + 1;
    augment_copy(&full, d, s, scc::snapshot_width(n))
}

/// Independently keeps each example unaugmented with probability `p`,
/// otherwise hands it to `augment`. Example `i` draws from its own stream
/// seeded by `(seed, i)`.
pub fn build_mixture<F>(
    dataset: &[EncodedExample],
    scope: LossScope,
    p: f64,
    seed: u64,
    mut augment: F,
) -> Result<Vec<AugmentedSequence>, AugError>
where
    F: FnMut(usize, &EncodedExample, &mut Rng) -> Result<AugmentedSequence, AugError>,
{
    if !(0.0..=1.0).contains(&p) {
        return Err(AugError::Spec(format!("p = {p} is outside [0, 1]")));
    }
    dataset
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut rng = seed::rng(seed::index_seed(seed, i as u64));
            let keep = rng.random::<f64>() < p;
            let mut out = if keep {
                AugmentedSequence::plain(ex.full_sequence(), i, scope, ex.prefix.len())
            } else {
                let mut aug = augment(i, ex, &mut rng)?;
                aug.set_loss_scope(scope, ex.prefix.len());
                aug
            };
            out.origin = i;
            Ok(out)
        })
        .collect()
}

/// Augments one star-graph example according to `spec`.
pub fn augment_star_example(ex: &EncodedExample, spec: &AugSpec, rng: &mut Rng) -> Result<AugmentedSequence, AugError> {
    let path_len = ex.completion.len().div_ceil(2);
    let span = choose_span_stargraph(path_len, spec.policy, spec.fixed, rng)?;
    augment_star_encoded(ex, span)
}

/// Augments one SCC example according to `spec`; needs the parsed trace.
pub fn augment_scc_example(
    ex: &EncodedExample,
    trace: &SccTrace,
    spec: &AugSpec,
    rng: &mut Rng,
) -> Result<AugmentedSequence, AugError> {
    let i = choose_span_scc(trace, spec.policy, rng)?;
    augment_scc_encoded(ex, trace.final_labels.len(), i)
}

/// Lookahead span content for star graphs, as node labels.
pub fn star_span_nodes(path: &[Node], span: Range<usize>) -> Vec<Node> {
    path[span].to_vec()
}

/// `is_augmented<TAB>tokens<TAB>mask`, one record per line.
pub fn write_augmented<W: Write>(mut w: W, seqs: &[AugmentedSequence], vocab: &Vocab) -> Result<(), AugError> {
    for s in seqs {
        let toks = vocab.decode(&s.ids)?;
        let mask: String = s.loss_mask.iter().map(|&m| if m == 1 { '1' } else { '0' }).collect();
        writeln!(w, "{}\t{}\t{}", u8::from(s.is_augmented()), toks.join(" "), mask)?;
    }
    Ok(())
}

pub fn read_augmented<R: BufRead>(r: R, vocab: &Vocab) -> Result<Vec<AugmentedSequence>, AugError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| AugError::Record { line: i + 1, reason: reason.to_string() };
        let mut cols = line.split('\t');
        let (Some(flag), Some(toks), Some(mask), None) = (cols.next(), cols.next(), cols.next(), cols.next()) else {
            return Err(bad("expected three tab-separated columns"));
        };
        let tokens: Vec<&str> = toks.split_whitespace().collect();
        let ids = vocab.encode(&tokens)?;
        let loss_mask = mask
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(bad("mask must be a 0/1 string")),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        if loss_mask.len() != ids.len() {
            return Err(bad("mask length differs from token count"));
        }
        let span = match (&positions(&ids, Vocab::T_OPEN)[..], &positions(&ids, Vocab::T_CLOSE)[..]) {
            (&[], &[]) => None,
            (&[open], &[close]) if open < close => Some(Span { open, close }),
            _ => return Err(bad("expected at most one well-ordered <T> .. </T> span")),
        };
        let flagged = match flag {
            "1" => true,
            "0" => false,
            _ => return Err(bad("is_augmented must be 0 or 1")),
        };
        if flagged != span.is_some() {
            return Err(bad("is_augmented flag disagrees with the tokens"));
        }
        out.push(AugmentedSequence { ids, loss_mask, span, origin: out.len() });
    }
    Ok(out)
}

/// Example helper for callers holding token strings.
pub fn encode_all(examples: &[Example], vocab: &Vocab) -> Result<Vec<EncodedExample>, VocabError> {
    examples.iter().map(|e| e.encode(vocab)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scc::{run_tarjan_with_trace, Digraph};
    use crate::stargraph::{generate_star, linearize_star, StarParams};

    fn letters() -> (Vocab, Sequence) {
        let v = Vocab::build([["A", "B", "C", "D", "E", "F", "G"]]).unwrap();
        let s = v.encode(&["A", "B", "C", "D", "E", "F", "G"]).unwrap();
        (v, s)
    }

    #[test]
    fn copy_matches_schematic() {
        let (v, s) = letters();
        let aug = augment_copy(&s, 2, 5, 2).unwrap();
        assert_eq!(v.decode(&aug.ids).unwrap().join(" "), "A B <T> E F </T> C D E F G");
        assert_eq!(aug.span, Some(Span { open: 2, close: 5 }));
        assert_eq!(strip_augmentation(&aug), s);
        aug.check_invariants().unwrap();
    }

    #[test]
    fn copy_boundary() {
        let (_, s) = letters();
        let t = s.len();
        let k = 3;
        assert!(augment_copy(&s, 1, t - k, k).is_ok());
        assert!(matches!(augment_copy(&s, 1, t - k + 1, k), Err(AugError::Constraint { .. })));
        assert!(augment_copy(&s, 3, 3, 1).is_err());
        assert!(augment_copy(&s, 0, 1, 0).is_err());
    }

    fn sentences(v: &mut Vocab) -> Vec<Sequence> {
        let words = [["the", "cat"], ["a", "dog"], ["it", "ran"], ["we", "hid"], ["sun", "set"]];
        let mut stream: Vec<String> = words.iter().flatten().map(|s| s.to_string()).collect();
        stream.extend(zeta_vocabulary(DEFAULT_ZETA, 4));
        *v = Vocab::build([stream]).unwrap();
        words.iter().map(|w| v.encode(w).unwrap()).collect()
    }

    #[test]
    fn copy_pos_names_the_target_sentence() {
        let mut v = Vocab::build([["x"]]).unwrap();
        let sents = sentences(&mut v);
        let aug = augment_copy_pos(&sents, 2, 2, &v, DEFAULT_ZETA, false).unwrap();
        let text = v.decode(&aug.ids).unwrap().join(" ");
        assert_eq!(
            text,
            "the cat a dog <T> I want the [2]-th sentence from here to be [ we hid ] </T> it ran we hid sun set"
        );
        let orig: Vec<TokenId> = sents.iter().flat_map(|s| s.iter().copied()).collect();
        assert_eq!(strip_augmentation(&aug).0, orig);
        aug.check_invariants().unwrap();
    }

    #[test]
    fn copy_pos_k1_and_range_errors() {
        let mut v = Vocab::build([["x"]]).unwrap();
        let sents = sentences(&mut v);
        let aug = augment_copy_pos(&sents, 4, 1, &v, DEFAULT_ZETA, false).unwrap();
        assert!(v.decode(&aug.ids).unwrap().join(" ").contains("[1]-th sentence from here to be [ sun set ]"));
        assert!(augment_copy_pos(&sents, 4, 2, &v, DEFAULT_ZETA, false).is_err());
        assert!(augment_copy_pos(&sents, 0, 1, &v, DEFAULT_ZETA, false).is_err());
    }

    #[test]
    fn explicit_positions_label_following_sentences() {
        let mut v = Vocab::build([["x"]]).unwrap();
        let sents = sentences(&mut v);
        let aug = augment_copy_pos(&sents, 3, 1, &v, DEFAULT_ZETA, true).unwrap();
        let text = v.decode(&aug.ids).unwrap().join(" ");
        assert!(text.ends_with("</T> [1] we hid [2] sun set"), "{text}");
    }

    #[test]
    fn zeta_is_injective_on_samples() {
        let mut seen = std::collections::HashSet::new();
        for k in 1..6 {
            for s in 0..20 {
                let sent = vec![s.to_string(), "w".to_string()];
                assert!(seen.insert(zeta_tokens(DEFAULT_ZETA, k, &sent)));
            }
        }
    }

    #[test]
    fn star_random_span_never_touches_v1_or_goal() {
        let mut rng = seed::rng(1);
        for _ in 0..200 {
            let r = choose_span_stargraph(5, Policy::Random, FixedSpan::default(), &mut rng).unwrap();
            assert!(r.start >= 2 && r.end <= 4 && !r.is_empty());
        }
        assert!(matches!(
            choose_span_stargraph(3, Policy::Random, FixedSpan::default(), &mut rng),
            Err(AugError::PathTooShort(3))
        ));
    }

    #[test]
    fn star_fixed_span_is_constant() {
        let mut rng = seed::rng(2);
        let fixed = FixedSpan { offset: 2, len: Some(2) };
        for _ in 0..20 {
            assert_eq!(choose_span_stargraph(10, Policy::Fixed, fixed, &mut rng).unwrap(), 2..4);
        }
        assert_eq!(FixedSpan::default().range_for(10).unwrap(), 2..6);
        assert_eq!(FixedSpan::default().range_for(5).unwrap(), 2..4);
        assert!(FixedSpan { offset: 2, len: Some(3) }.range_for(5).is_err());
    }

    #[test]
    fn star_augmentation_layout() {
        let inst = generate_star(StarParams::new(2, 5), 3).unwrap();
        let ex = linearize_star(&inst);
        let labels: Vec<String> = (0..100).map(|i| i.to_string()).collect();
        let v = Vocab::build([labels, vec![",".into(), "|".into(), "/".into(), "=".into()]]).unwrap();
        let enc = ex.encode(&v).unwrap();
        let aug = augment_star_encoded(&enc, 2..4).unwrap();
        let toks = v.decode(&aug.ids).unwrap();
        let p = ex.prefix.len();
        let path: Vec<String> = inst.path.iter().map(|n| n.to_string()).collect();
        let expect = [
            &path[0], ",", "<T>", &path[2], ",", &path[3], ",", "</T>", &path[1], ",", &path[2], ",", &path[3], ",",
            &path[4], "<eos>",
        ];
        assert_eq!(toks[p..], expect);
    }

    fn appendix_trace() -> SccTrace {
        let parse = |s: &str| s.split(' ').map(|x| x.parse().unwrap()).collect::<Vec<usize>>();
        let mut snapshots = vec![parse("0 1 2 3 4 5"); 23];
        snapshots.push(parse("0 1 2 3 2 5"));
        snapshots.extend(std::iter::repeat_n(parse("0 1 2 2 2 5"), 8));
        SccTrace { final_labels: parse("0 1 2 2 2 5"), snapshots }
    }

    #[test]
    fn scc_rule_based_picks_first_change() {
        let trace = appendix_trace();
        assert_eq!(trace.snapshots.len(), 32);
        let mut rng = seed::rng(0);
        let i = choose_span_scc(&trace, Policy::RuleBased, &mut rng).unwrap();
        assert_eq!(trace.snapshots[i], vec![0, 1, 2, 3, 2, 5]);
    }

    #[test]
    fn scc_rule_based_constant_trace_falls_back_to_last() {
        let trace = run_tarjan_with_trace(&Digraph::empty(4));
        let mut rng = seed::rng(0);
        assert_eq!(choose_span_scc(&trace, Policy::RuleBased, &mut rng).unwrap(), 3);
        let one = run_tarjan_with_trace(&Digraph::empty(1));
        assert!(matches!(choose_span_scc(&one, Policy::RuleBased, &mut rng), Err(AugError::TraceTooShort(1))));
    }

    #[test]
    fn scc_random_never_picks_first_state() {
        let trace = appendix_trace();
        let mut rng = seed::rng(5);
        let mut seen = vec![false; trace.snapshots.len()];
        for _ in 0..5000 {
            let i = choose_span_scc(&trace, Policy::Random, &mut rng).unwrap();
            assert_ne!(i, 0);
            seen[i] = true;
        }
        assert!(seen[1..].iter().all(|&s| s));
    }

    #[test]
    fn loss_masks() {
        let (_, s) = letters();
        assert!(make_loss_mask(&s, LossScope::All, 0).iter().all(|&m| m == 1));
        let aug = augment_copy(&s, 2, 5, 2).unwrap();
        let m = make_loss_mask(&aug.ids, LossScope::CompletionOnly, 3);
        let zeros = m.iter().filter(|&&x| x == 0).count();
        assert_eq!(zeros, 1 + 3 - 1, "<T> sits inside the prefix region here");
        let m = make_loss_mask(&aug.ids, LossScope::CompletionOnly, 2);
        assert_eq!(m.iter().filter(|&&x| x == 0).count(), 1 + 2);
        assert_eq!(m[aug.span.unwrap().close], 1);
    }

    #[test]
    fn mixture_extremes() {
        let (_, s) = letters();
        let data: Vec<EncodedExample> = (0..50)
            .map(|_| EncodedExample { prefix: Sequence(s[..2].to_vec()), completion: Sequence(s[2..].to_vec()) })
            .collect();
        let aug = |_: usize, ex: &EncodedExample, _: &mut Rng| augment_copy(&ex.full_sequence(), 3, 5, 2);
        let all_plain = build_mixture(&data, LossScope::All, 1.0, 7, aug).unwrap();
        assert!(all_plain.iter().all(|a| !a.is_augmented()));
        let all_aug = build_mixture(&data, LossScope::CompletionOnly, 0.0, 7, aug).unwrap();
        assert!(all_aug.iter().all(|a| a.is_augmented()));
        for a in &all_aug {
            a.check_invariants().unwrap();
            assert_eq!(a.loss_mask.iter().filter(|&&m| m == 0).count(), 2 + 1);
        }
        assert!(build_mixture(&data, LossScope::All, 1.5, 7, aug).is_err());
    }

    #[test]
    fn strip_is_identity_without_specials_and_idempotent() {
        let ids = vec![7, 8, 9];
        assert_eq!(strip_ids(&ids), ids);
        let with = vec![7, Vocab::T_OPEN, 9, Vocab::T_CLOSE, 8];
        assert_eq!(strip_ids(&with), vec![7, 8]);
        assert_eq!(strip_ids(&strip_ids(&with)), vec![7, 8]);
        assert_eq!(strip_tokens(&["a", "<T>", "b", "</T>", "c"]), vec!["a", "c"]);
    }

    #[test]
    fn spec_kv_round_trip_and_validation() {
        let spec = AugSpec { policy: Policy::Fixed, fixed: FixedSpan { offset: 3, len: Some(2) }, ..AugSpec::default() };
        assert_eq!(AugSpec::from_kv(&spec.to_kv()).unwrap(), spec);
        assert_eq!(AugSpec::from_kv(&AugSpec::default().to_kv()).unwrap(), AugSpec::default());
        let bad = KvConfig::parse("p=1.5").unwrap();
        assert!(AugSpec::from_kv(&bad).is_err());
        let bad = KvConfig::parse("policy=sideways").unwrap();
        assert!(AugSpec::from_kv(&bad).is_err());
        let bad = KvConfig::parse("fixed.offset=1").unwrap();
        assert!(AugSpec::from_kv(&bad).is_err());
    }

    #[test]
    fn augmented_file_round_trip() {
        let (v, s) = letters();
        let mut a = augment_copy(&s, 2, 5, 2).unwrap();
        a.set_loss_scope(LossScope::CompletionOnly, 2);
        let b = AugmentedSequence::plain(s.clone(), 1, LossScope::All, 0);
        let mut buf = Vec::new();
        write_augmented(&mut buf, &[a.clone(), b.clone()], &v).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("1\tA B <T> E F </T> C D E F G\t00011111111\n"));
        let back = read_augmented(&buf[..], &v).unwrap();
        assert_eq!(back, vec![a, b]);
        assert!(read_augmented("1\tA B\t11\n".as_bytes(), &v).is_err());
        assert!(read_augmented("0\tA B\t1\n".as_bytes(), &v).is_err());
    }
}
