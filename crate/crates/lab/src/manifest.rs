//! Flat `key=value` experiment manifests.

use std::path::PathBuf;

use lookahead_core::kv::{parse_list, KvConfig, KvError};
use lookahead_core::seed::derive_seed;
use lookahead_core::stargraph::StarParams;
use lookahead_core::{AugSpec, TaskSpec};
use lookahead_model::decoder::{Strategy, DEFAULT_Z_CAP};
use lookahead_model::trainer::TrainConfig;
use lookahead_model::ModelConfig;
use thiserror::Error;

use crate::eval::{InferenceMode, Variant};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Task(#[from] lookahead_core::task::TaskError),
    #[error(transparent)]
    Aug(#[from] lookahead_core::augment::AugError),
    #[error(transparent)]
    Model(#[from] lookahead_model::ModelError),
    #[error("invalid manifest: {0}")]
    Invalid(String),
}

/// Named random streams, all derived from the master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubSeeds {
    pub data: u64,
    pub augment: u64,
    pub init: u64,
    pub shuffle: u64,
    pub decode: u64,
}

impl SubSeeds {
    pub fn from_master(master: u64) -> Self {
        Self {
            data: derive_seed(master, "data"),
            augment: derive_seed(master, "augment"),
            init: derive_seed(master, "init"),
            shuffle: derive_seed(master, "shuffle"),
            decode: derive_seed(master, "decode"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSpec {
    pub modes: Vec<InferenceMode>,
    pub max_new_tokens: usize,
    pub z_cap: usize,
    pub strategy: Strategy,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self { modes: InferenceMode::ALL.to_vec(), max_new_tokens: 0, z_cap: DEFAULT_Z_CAP, strategy: Strategy::Greedy }
    }
}

impl EvalSpec {
    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        let modes: Vec<String> = self.modes.iter().map(ToString::to_string).collect();
        kv.set("modes", modes.join(","));
        kv.set("max_new_tokens", if self.max_new_tokens == 0 { "auto".to_string() } else { self.max_new_tokens.to_string() });
        kv.set("z_cap", self.z_cap);
        kv.set("strategy", self.strategy);
        kv
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self, KvError> {
        kv.check_keys(&["modes", "max_new_tokens", "z_cap", "strategy"])?;
        let d = Self::default();
        let modes = match kv.get_str("modes") {
            Some(s) => parse_list::<InferenceMode>("modes", s)?,
            None => d.modes,
        };
        let max_new_tokens = match kv.get_str("max_new_tokens") {
            None | Some("auto") => 0,
            Some(_) => kv.require("max_new_tokens")?,
        };
        Ok(Self { modes, max_new_tokens, z_cap: kv.get_or("z_cap", d.z_cap)?, strategy: kv.get_or("strategy", d.strategy)? })
    }
}

/// One experiment: data, augmentation, model, training and evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentManifest {
    pub name: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub task: TaskSpec,
    /// Star: total examples. SCC: examples per graph size.
    pub train_count: usize,
    pub test_count: usize,
    pub aug: AugSpec,
    /// `vocab_size` and `max_seq_len` of 0 mean "derive from the data".
    pub model: ModelConfig,
    /// `seed` is ignored; the shuffle stream comes from the master seed.
    pub train: TrainConfig,
    pub eval: EvalSpec,
    /// Free-form `expect.*` entries (target accuracies, tolerances). Stored
    /// with the manifest for the record; they do not affect any stage.
    pub expect: KvConfig,
}

impl ExperimentManifest {
    /// Desk defaults for a task.
    pub fn new(name: &str, task: TaskSpec, out_dir: PathBuf) -> Self {
        let (train_count, test_count) = match task {
            TaskSpec::Star(_) => (50_000, 1_000),
            TaskSpec::Scc { .. } => (10_000, 200),
        };
        let aug = AugSpec { policy: task.default_policy(), ..AugSpec::default() };
        let mut model = ModelConfig::desk(0, 0);
        model.vocab_size = 0;
        Self {
            name: name.to_string(),
            seed: 0,
            out_dir,
            task,
            train_count,
            test_count,
            aug,
            model,
            train: TrainConfig::default(),
            eval: EvalSpec::default(),
            expect: KvConfig::new(),
        }
    }

    pub fn seeds(&self) -> SubSeeds {
        SubSeeds::from_master(self.seed)
    }

    pub fn variant(&self) -> Variant {
        Variant::of(&self.aug)
    }

    /// Modes that apply to this variant (NTP has only AutoReg).
    pub fn eval_modes(&self) -> Vec<InferenceMode> {
        let modes = self.eval.modes.iter().copied();
        if self.variant() == Variant::Ntp {
            modes.filter(|m| *m == InferenceMode::AutoReg).collect()
        } else {
            modes.collect()
        }
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        self.task.validate()?;
        self.aug.validate()?;
        self.train.validate()?;
        if self.name.is_empty() || self.name.contains(['/', '\\', '\n']) {
            return Err(ManifestError::Invalid(format!("bad experiment name {:?}", self.name)));
        }
        if self.train_count == 0 || self.test_count == 0 {
            return Err(ManifestError::Invalid("train and test counts must be positive".into()));
        }
        if self.eval.modes.is_empty() {
            return Err(ManifestError::Invalid("no evaluation modes".into()));
        }
        if self.model.n_layers == 0 || self.model.n_heads == 0 || !self.model.d_model.is_multiple_of(self.model.n_heads) {
            return Err(ManifestError::Invalid("model shape is inconsistent".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("manifest.version", MANIFEST_VERSION);
        kv.set("name", &self.name);
        kv.set("seed", self.seed);
        kv.set("out_dir", self.out_dir.display());
        kv.merge_prefixed("task.", &self.task.to_kv());
        kv.set("data.train_count", self.train_count);
        kv.set("data.test_count", self.test_count);
        kv.merge_prefixed("aug.", &self.aug.to_kv());
        let mut model = self.model.to_kv();
        for key in ["vocab_size", "max_seq_len"] {
            if model.get_str(key) == Some("0") {
                model.set(key, "auto");
            }
        }
        kv.merge_prefixed("model.", &model);
        let mut train = self.train.to_kv();
        train.set("seed", 0);
        kv.merge_prefixed("train.", &train);
        kv.merge_prefixed("eval.", &self.eval.to_kv());
        kv.merge_prefixed("expect.", &self.expect);
        kv
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text()
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self, ManifestError> {
        kv.check_keys(&[
            "manifest.version", "name", "seed", "out_dir", "task.", "data.train_count", "data.test_count", "aug.", "model.",
            "train.", "eval.", "expect.",
        ])?;
        let version: u32 = kv.require("manifest.version")?;
        if version != MANIFEST_VERSION {
            return Err(ManifestError::Invalid(format!("unsupported manifest version {version}")));
        }
        let task = TaskSpec::from_kv(&kv.section("task."))?;
        let mut m = Self::new(&kv.get_or("name", "experiment".to_string())?, task, PathBuf::new());
        m.seed = kv.get_or("seed", 0)?;
        m.out_dir = PathBuf::from(kv.get_or("out_dir", "runs".to_string())?);
        m.train_count = kv.get_or("data.train_count", m.train_count)?;
        m.test_count = kv.get_or("data.test_count", m.test_count)?;
        let aug_kv = kv.section("aug.");
        let mut aug = AugSpec::from_kv(&aug_kv)?;
        if aug_kv.get_str("policy").is_none() {
            aug.policy = m.task.default_policy();
        }
        m.aug = aug;
        let mut model_kv = kv.section("model.");
        for key in ["vocab_size", "max_seq_len"] {
            if model_kv.get_str(key) == Some("auto") {
                model_kv.set(key, 0);
            }
        }
        m.model = ModelConfig::from_kv(&model_kv, &m.model)?;
        let mut train = TrainConfig::from_kv(&kv.section("train."))?;
        train.seed = 0;
        m.train = train;
        m.eval = EvalSpec::from_kv(&kv.section("eval."))?;
        m.expect = kv.section("expect.");
        m.validate()?;
        Ok(m)
    }

    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        Self::from_kv(&KvConfig::parse(text)?)
    }
}

/// The G(2,5) desk experiment: `p = 1` gives the next-token baseline,
/// `p < 1` the random-span lookahead variant.
pub fn star_experiment(name: &str, p: f64, out_dir: PathBuf) -> ExperimentManifest {
    let mut m = ExperimentManifest::new(name, TaskSpec::Star(StarParams::new(2, 5)), out_dir);
    m.aug.p = p;
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use lookahead_core::Policy;

    #[test]
    fn manifest_round_trips() {
        let mut m = star_experiment("g25", 0.5, PathBuf::from("/tmp/x"));
        m.seed = 42;
        m.eval.modes = vec![InferenceMode::AutoReg, InferenceMode::Specified];
        m.train.lr = 1e-3;
        let text = m.to_text();
        let back = ExperimentManifest::parse(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn scc_manifest_round_trips_with_default_policy() {
        let task = TaskSpec::Scc { sizes: vec![4, 5], edge_prob: 0.3 };
        let m = ExperimentManifest::new("scc", task, PathBuf::from("out"));
        assert_eq!(m.aug.policy, Policy::RuleBased);
        assert_eq!(ExperimentManifest::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn ntp_evaluates_autoreg_only() {
        let m = star_experiment("ntp", 1.0, PathBuf::from("out"));
        assert_eq!(m.variant(), Variant::Ntp);
        assert_eq!(m.eval_modes(), vec![InferenceMode::AutoReg]);
    }

    #[test]
    fn unknown_keys_and_versions_are_rejected() {
        let text = star_experiment("a", 0.5, PathBuf::from("o")).to_text();
        assert!(ExperimentManifest::parse(&format!("{text}bogus=1\n")).is_err());
        assert!(ExperimentManifest::parse(&text.replace("manifest.version=1", "manifest.version=2")).is_err());
    }

    #[test]
    fn sub_seeds_are_distinct() {
        let s = SubSeeds::from_master(7);
        let all = [s.data, s.augment, s.init, s.shuffle, s.decode];
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
    }
}
