//! Exact-match task accuracy under the three inference modes.

use std::fmt;
use std::str::FromStr;

use lookahead_core::augment::strip_tokens;
use lookahead_core::scc::parse_final_labels;
use lookahead_core::seed::{self, Rng};
use lookahead_core::stargraph::{parse_path, verify_path};
use lookahead_core::{AugSpec, Example, Instance, Policy, TaskSpec, Vocab};
use lookahead_model::decoder::{DecodeMode, DecodeRequest, Decoder, Strategy};
use lookahead_model::Scalar;
use rand::Rng as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Task(#[from] lookahead_core::task::TaskError),
    #[error(transparent)]
    Aug(#[from] lookahead_core::augment::AugError),
    #[error(transparent)]
    Vocab(#[from] lookahead_core::vocab::VocabError),
    #[error(transparent)]
    Decode(#[from] lookahead_model::decoder::DecodeError),
}

/// How the evaluated model was trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Ntp,
    Fixed,
    Random,
    RuleBased,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Ntp, Variant::Fixed, Variant::Random, Variant::RuleBased];

    /// `p = 1` trains on unaugmented data only, whatever the policy.
    pub fn of(spec: &AugSpec) -> Self {
        if spec.p >= 1.0 {
            return Variant::Ntp;
        }
        match spec.policy {
            Policy::Fixed => Variant::Fixed,
            Policy::Random => Variant::Random,
            Policy::RuleBased => Variant::RuleBased,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Ntp => "NTP",
            Variant::Fixed => "fixed",
            Variant::Random => "random",
            Variant::RuleBased => "rule_based",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InferenceMode {
    AutoReg,
    Generated,
    Specified,
}

impl InferenceMode {
    pub const ALL: [InferenceMode; 3] = [InferenceMode::AutoReg, InferenceMode::Generated, InferenceMode::Specified];
}

impl fmt::Display for InferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InferenceMode::AutoReg => "AutoReg",
            InferenceMode::Generated => "Generated",
            InferenceMode::Specified => "Specified",
        })
    }
}

impl FromStr for InferenceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "autoreg" | "ar" => Ok(InferenceMode::AutoReg),
            "generated" | "tgen" => Ok(InferenceMode::Generated),
            "specified" | "tspec" => Ok(InferenceMode::Specified),
            _ => Err(format!("unknown inference mode {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub task_id: String,
    pub variant: Variant,
    pub mode: InferenceMode,
    pub correct: usize,
    pub n_examples: usize,
    pub accuracy: f64,
    /// Outputs that could not be parsed; counted as incorrect.
    pub malformed: usize,
    pub seed: u64,
}

impl EvalResult {
    pub fn new(
        task_id: String,
        variant: Variant,
        mode: InferenceMode,
        correct: usize,
        n_examples: usize,
        malformed: usize,
        seed: u64,
    ) -> Result<Self, EvalError> {
        if variant == Variant::Ntp && mode != InferenceMode::AutoReg {
            return Err(EvalError::Invalid(format!("NTP models have no {mode} row")));
        }
        if correct > n_examples || malformed > n_examples - correct {
            return Err(EvalError::Invalid("counts exceed the number of examples".into()));
        }
        let accuracy = if n_examples == 0 { 0.0 } else { correct as f64 / n_examples as f64 };
        Ok(Self { task_id, variant, mode, correct, n_examples, accuracy, malformed, seed })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Correct,
    Wrong,
    Malformed,
}

/// Star graph: strip spans, parse the node list, exact-match the path.
pub fn score_star(inst: &lookahead_core::stargraph::StarGraphInstance, raw: &[String]) -> Outcome {
    match parse_path(&strip_tokens(raw)) {
        Some(p) if verify_path(inst, &p) => Outcome::Correct,
        Some(_) => Outcome::Wrong,
        None => Outcome::Malformed,
    }
}

/// SCC: strip spans, compare the labels after the final `|`.
pub fn score_scc(inst: &lookahead_core::scc::SccInstance, raw: &[String]) -> Outcome {
    match parse_final_labels(&strip_tokens(raw)) {
        Some(l) if l == inst.trace.final_labels => Outcome::Correct,
        Some(_) => Outcome::Wrong,
        None => Outcome::Malformed,
    }
}

pub fn score(inst: &Instance, raw: &[String]) -> Outcome {
    match inst {
        Instance::Star(s) => score_star(s, raw),
        Instance::Scc(s) => score_scc(s, raw),
    }
}

/// Anything that turns a test prompt into completion tokens.
pub trait Completer {
    /// Completion tokens after the prompt, lookahead spans included.
    fn complete(&mut self, index: usize, example: &Example, inst: &Instance, mode: InferenceMode)
        -> Result<Vec<String>, EvalError>;
}

/// Ground-truth span for test example `index`, drawn the way training drew
/// it (from its own seeded stream).
pub fn specified_span(inst: &Instance, spec: &AugSpec, decode_seed: u64, index: usize) -> Result<Vec<String>, EvalError> {
    let mut rng = seed::rng(seed::index_seed(decode_seed, index as u64));
    Ok(inst.span_tokens(spec, &mut rng)?)
}

/// Decodes with a trained model.
pub struct ModelCompleter<'a, S> {
    pub decoder: Decoder<'a, S>,
    pub vocab: &'a Vocab,
    pub spec: AugSpec,
    pub decode_seed: u64,
    pub max_new_tokens: usize,
    pub z_cap: usize,
    pub strategy: Strategy,
    pub force_closed: usize,
}

impl<S: Scalar> Completer for ModelCompleter<'_, S> {
    fn complete(&mut self, index: usize, ex: &Example, inst: &Instance, mode: InferenceMode) -> Result<Vec<String>, EvalError> {
        let prompt = self.vocab.encode(&ex.prefix)?.0;
        let decode_mode = match mode {
            InferenceMode::AutoReg => DecodeMode::Autoregressive,
            InferenceMode::Generated => DecodeMode::TGenerated,
            InferenceMode::Specified => {
                let z = specified_span(inst, &self.spec, self.decode_seed, index)?;
                DecodeMode::TSpecified(self.vocab.encode(&z)?.0)
            }
        };
        let strategy = match self.strategy {
            Strategy::Sample { temperature, seed: s } => {
                Strategy::Sample { temperature, seed: seed::index_seed(s, index as u64) }
            }
            Strategy::Greedy => Strategy::Greedy,
        };
        let req = DecodeRequest {
            mode: decode_mode,
            prompt,
            decision_offset: Some(inst.decision_offset()),
            max_new_tokens: self.max_new_tokens,
            strategy,
            z_cap: self.z_cap,
        };
        let out = self.decoder.decode(&req)?;
        self.force_closed += usize::from(out.force_closed);
        Ok(self.vocab.decode(&out.raw)?)
    }
}

/// Returns the ground-truth completion, optionally with the specified span.
pub struct OracleCompleter;

impl Completer for OracleCompleter {
    fn complete(&mut self, _: usize, ex: &Example, _: &Instance, _: InferenceMode) -> Result<Vec<String>, EvalError> {
        Ok(ex.completion.clone())
    }
}

/// Walks the star graph correctly but chooses the first arm uniformly at
/// random: the best a model can do without planning.
pub struct RandomArmCompleter {
    rng: Rng,
}

impl RandomArmCompleter {
    pub fn new(seed: u64) -> Self {
        Self { rng: seed::rng(seed) }
    }
}

impl Completer for RandomArmCompleter {
    fn complete(&mut self, _: usize, _: &Example, inst: &Instance, _: InferenceMode) -> Result<Vec<String>, EvalError> {
        let Instance::Star(star) = inst else {
            return Err(EvalError::Invalid("random-arm decoding needs a star graph".into()));
        };
        let heads = star.arm_heads();
        let succ = star.successors();
        let mut path = vec![star.start, heads[self.rng.random_range(0..heads.len())]];
        while let Some(next) = succ.get(path.last().unwrap()).and_then(|v| v.first()) {
            path.push(*next);
        }
        Ok(lookahead_core::stargraph::path_tokens(&path))
    }
}

/// Scores `completer` on `testset`, one result per task id in first-seen
/// order (SCC test sets mix graph sizes).
pub fn evaluate(
    task: &TaskSpec,
    completer: &mut dyn Completer,
    testset: &[Example],
    mode: InferenceMode,
    variant: Variant,
    seed: u64,
) -> Result<Vec<EvalResult>, EvalError> {
    let mut groups: Vec<(String, usize, usize, usize)> = Vec::new();
    for (i, ex) in testset.iter().enumerate() {
        let inst = task.parse(ex)?;
        let raw = completer.complete(i, ex, &inst, mode)?;
        let outcome = score(&inst, &raw);
        let id = inst.task_id();
        let g = match groups.iter().position(|g| g.0 == id) {
            Some(k) => &mut groups[k],
            None => {
                groups.push((id, 0, 0, 0));
                groups.last_mut().unwrap()
            }
        };
        g.1 += 1;
        match outcome {
            Outcome::Correct => g.2 += 1,
            Outcome::Malformed => g.3 += 1,
            Outcome::Wrong => {}
        }
    }
    groups
        .into_iter()
        .map(|(id, n, correct, malformed)| EvalResult::new(id, variant, mode, correct, n, malformed, seed))
        .collect()
}

fn single(mut v: Vec<EvalResult>, what: &str) -> Result<EvalResult, EvalError> {
    match v.len() {
        1 => Ok(v.pop().unwrap()),
        0 => Err(EvalError::Invalid(format!("empty {what} test set"))),
        k => Err(EvalError::Invalid(format!("{what} test set mixes {k} task sizes"))),
    }
}

pub fn eval_stargraph(
    task: &TaskSpec,
    completer: &mut dyn Completer,
    testset: &[Example],
    mode: InferenceMode,
    variant: Variant,
    seed: u64,
) -> Result<EvalResult, EvalError> {
    if !matches!(task, TaskSpec::Star(_)) {
        return Err(EvalError::Invalid("not a star-graph task".into()));
    }
    single(evaluate(task, completer, testset, mode, variant, seed)?, "star-graph")
}

/// One graph size per call; see [`evaluate`] for mixed sets.
pub fn eval_scc(
    task: &TaskSpec,
    completer: &mut dyn Completer,
    testset: &[Example],
    mode: InferenceMode,
    variant: Variant,
    seed: u64,
) -> Result<EvalResult, EvalError> {
    if !matches!(task, TaskSpec::Scc { .. }) {
        return Err(EvalError::Invalid("not an SCC task".into()));
    }
    single(evaluate(task, completer, testset, mode, variant, seed)?, "SCC")
}
