//! Task descriptions tying generators, vocabularies and augmentation
//! together.

use std::fmt;

use thiserror::Error;

use crate::augment::{self, AugError, AugSpec, AugmentedSequence, Policy, STAR_DECISION_OFFSET};
use crate::example::{EncodedExample, Example};
use crate::kv::{parse_list, KvConfig, KvError};
use crate::scc::{self, SccError, SccInstance};
use crate::seed::{self, Rng};
use crate::stargraph::{self, StarError, StarParams};
use crate::vocab::{TextStyle, Vocab, VocabError};

pub const DEFAULT_SCC_SIZES: [usize; 5] = [4, 5, 11, 12, 15];
pub const DEFAULT_EDGE_PROB: f64 = 0.3;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    Star(#[from] StarError),
    #[error(transparent)]
    Scc(#[from] SccError),
    #[error(transparent)]
    Aug(#[from] AugError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("invalid task: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum TaskSpec {
    Star(StarParams),
    Scc { sizes: Vec<usize>, edge_prob: f64 },
}

/// A parsed test or training example with its ground truth.
#[derive(Clone, Debug)]
pub enum Instance {
    Star(stargraph::StarGraphInstance),
    Scc(SccInstance),
}

impl TaskSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            TaskSpec::Star(_) => "star",
            TaskSpec::Scc { .. } => "scc",
        }
    }

    pub fn text_style(&self) -> TextStyle {
        match self {
            TaskSpec::Star(_) => TextStyle::Compact,
            TaskSpec::Scc { .. } => TextStyle::Spaced,
        }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        match self {
            TaskSpec::Star(p) => p.validate()?,
            TaskSpec::Scc { sizes, edge_prob } => {
                if sizes.is_empty() || sizes.contains(&0) {
                    return Err(TaskError::Invalid(format!("scc sizes must be non-empty and positive, got {sizes:?}")));
                }
                if !(0.0..=1.0).contains(edge_prob) {
                    return Err(TaskError::Invalid(format!("edge probability {edge_prob} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    /// Star: `count` instances. SCC: `count` instances per size, sizes in
    /// listed order. Instance `i` is seeded by `(seed, i)`.
    pub fn generate(&self, count: usize, seed: u64) -> Result<Vec<Example>, TaskError> {
        self.validate()?;
        match self {
            TaskSpec::Star(p) => (0..count)
                .map(|i| {
                    let inst = stargraph::generate_star(*p, seed::index_seed(seed, i as u64))?;
                    Ok(stargraph::linearize_star(&inst))
                })
                .collect(),
            TaskSpec::Scc { sizes, edge_prob } => {
                let mut out = Vec::with_capacity(count * sizes.len());
                for (si, &n) in sizes.iter().enumerate() {
                    let size_seed = seed::index_seed(seed::derive_seed(seed, "scc-size"), si as u64);
                    for i in 0..count {
                        let g = scc::generate_digraph(n, *edge_prob, seed::index_seed(size_seed, i as u64))?;
                        out.push(scc::linearize_scc(&SccInstance::new(g)));
                    }
                }
                Ok(out)
            }
        }
    }

    /// Closed vocabulary covering every token the task can produce.
    pub fn vocab(&self) -> Vocab {
        let symbols: Vec<String> = match self {
            TaskSpec::Star(p) => {
                let mut s: Vec<String> = (0..p.label_pool).map(|i| i.to_string()).collect();
                s.extend([",", "|", "/", "="].map(String::from));
                s
            }
            TaskSpec::Scc { sizes, .. } => {
                let max_n = sizes.iter().copied().max().unwrap_or(1);
                let mut s: Vec<String> =
                    [scc::SCC_TASK_NAME, ":", "A", "[", "]", ",", "initial_trace", "trace", "|", "scc_id"]
                        .map(String::from)
                        .to_vec();
                s.extend((0..max_n.max(2)).map(|i| i.to_string()));
                s
            }
        };
        Vocab::build([symbols]).expect("task symbols are valid and non-reserved")
    }

    pub fn parse(&self, ex: &Example) -> Result<Instance, TaskError> {
        Ok(match self {
            TaskSpec::Star(_) => Instance::Star(stargraph::parse_star(ex)?),
            TaskSpec::Scc { .. } => Instance::Scc(scc::parse_scc(ex)?),
        })
    }

    pub fn default_policy(&self) -> Policy {
        match self {
            TaskSpec::Star(_) => Policy::Random,
            TaskSpec::Scc { .. } => Policy::RuleBased,
        }
    }

    /// Decision offset for a bare prompt (no completion). SCC reads the
    /// graph size off the `initial_trace` array.
    pub fn prompt_decision_offset<S: AsRef<str>>(&self, prefix: &[S]) -> Result<usize, TaskError> {
        match self {
            TaskSpec::Star(_) => Ok(STAR_DECISION_OFFSET),
            TaskSpec::Scc { .. } => {
                let toks: Vec<&str> = prefix.iter().map(AsRef::as_ref).collect();
                let at = toks
                    .windows(3)
                    .position(|w| w == ["initial_trace", ":", "["])
                    .ok_or_else(|| TaskError::Invalid("prompt has no initial_trace array".into()))?;
                let n = toks[at + 3..]
                    .iter()
                    .position(|&t| t == "]")
                    .ok_or_else(|| TaskError::Invalid("unterminated initial_trace array".into()))?;
                Ok(augment::scc_decision_offset(n))
            }
        }
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self, TaskError> {
        let kind: String = kv.require("kind")?;
        let task = match kind.as_str() {
            "star" => TaskSpec::Star(StarParams {
                degree: kv.require("degree")?,
                path_len: kv.require("path_len")?,
                label_pool: kv.get_or("label_pool", stargraph::DEFAULT_LABEL_POOL)?,
            }),
            "scc" => TaskSpec::Scc {
                sizes: match kv.get_str("sizes") {
                    Some(v) => parse_list("sizes", v)?,
                    None => DEFAULT_SCC_SIZES.to_vec(),
                },
                edge_prob: kv.get_or("edge_prob", DEFAULT_EDGE_PROB)?,
            },
            other => return Err(TaskError::Invalid(format!("unknown task kind {other:?}"))),
        };
        task.validate()?;
        Ok(task)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("kind", self.kind());
        match self {
            TaskSpec::Star(p) => {
                kv.set("degree", p.degree);
                kv.set("path_len", p.path_len);
                kv.set("label_pool", p.label_pool);
            }
            TaskSpec::Scc { sizes, edge_prob } => {
                kv.set("sizes", sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(","));
                kv.set("edge_prob", edge_prob);
            }
        }
        kv
    }
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskSpec::Star(p) => f.write_str(&p.task_id()),
            TaskSpec::Scc { sizes, .. } => {
                let s: Vec<String> = sizes.iter().map(|n| format!("scc-{n}")).collect();
                f.write_str(&s.join("+"))
            }
        }
    }
}

impl Instance {
    pub fn task_id(&self) -> String {
        match self {
            Instance::Star(i) => format!("G({},{})", i.degree, i.path_len),
            Instance::Scc(i) => i.task_id(),
        }
    }

    /// Completion-token offset where `<T>` is injected at inference.
    pub fn decision_offset(&self) -> usize {
        match self {
            Instance::Star(_) => STAR_DECISION_OFFSET,
            Instance::Scc(i) => augment::scc_decision_offset(i.graph.n()),
        }
    }

    /// Augments this instance's encoded example according to `spec`.
    pub fn augment(&self, ex: &EncodedExample, spec: &AugSpec, rng: &mut Rng) -> Result<AugmentedSequence, AugError> {
        match self {
            Instance::Star(_) => augment::augment_star_example(ex, spec, rng),
            Instance::Scc(i) => augment::augment_scc_example(ex, &i.trace, spec, rng),
        }
    }

    /// Ground-truth span content as tokens, as it would appear inside
    /// `<T> .. </T>` for the given policy.
    pub fn span_tokens(&self, spec: &AugSpec, rng: &mut Rng) -> Result<Vec<String>, AugError> {
        match self {
            Instance::Star(i) => {
                let r = augment::choose_span_stargraph(i.path.len(), spec.policy, spec.fixed, rng)?;
                let mut out = Vec::new();
                for n in &i.path[r] {
                    out.push(n.to_string());
                    out.push(",".to_string());
                }
                Ok(out)
            }
            Instance::Scc(i) => {
                let s = augment::choose_span_scc(&i.trace, spec.policy, rng)?;
                Ok(scc::labels_tokens(&i.trace.snapshots[s]))
            }
        }
    }
}

/// Builds the training mixture for a task: each example is parsed for its
/// ground truth and augmented per `spec`.
pub fn build_task_mixture(
    task: &TaskSpec,
    examples: &[Example],
    vocab: &Vocab,
    spec: &AugSpec,
    seed: u64,
) -> Result<Vec<AugmentedSequence>, TaskError> {
    spec.validate()?;
    let encoded = augment::encode_all(examples, vocab)?;
    let instances = examples.iter().map(|e| task.parse(e)).collect::<Result<Vec<_>, _>>()?;
    let seqs = augment::build_mixture(&encoded, spec.loss_scope, spec.p, seed, |i, ex, rng| {
        instances[i].augment(ex, spec, rng)
    })?;
    Ok(seqs)
}
