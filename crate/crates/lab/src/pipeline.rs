//! Manifest-driven experiment pipeline with content-addressed stage caching.
//!
//! Stages run in order (data, augment, train, eval). Each writes into
//! `<out_dir>/cache/<stage>-<hash>/`, where the hash covers every input
//! that can change the stage's output, and drops a `DONE` marker last. A
//! stage whose marker exists is skipped; a directory without one is wiped
//! and rebuilt.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use lookahead_core::augment::{read_augmented, write_augmented, AugError};
use lookahead_core::dataset::{read_examples, write_examples, DatasetError, FileMode};
use lookahead_core::kv::KvConfig;
use lookahead_core::seed::index_seed;
use lookahead_core::task::{build_task_mixture, TaskError};
use lookahead_core::{Example, TaskSpec, Vocab};
use lookahead_model::checkpoint::{peek_dtype, Checkpoint};
use lookahead_model::decoder::Decoder;
use lookahead_model::trainer::{train, TrainOutput};
use lookahead_model::{Dtype, ModelError, Scalar, Transformer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eval::{evaluate, EvalError, EvalResult, ModelCompleter};
use crate::manifest::{ExperimentManifest, ManifestError};
use crate::report::{emit_report, parse_results_csv, Report};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Aug(#[from] AugError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Other(String),
}

impl PipelineError {
    /// Numerical failures (non-finite loss) as opposed to configuration or
    /// I/O problems.
    pub fn is_numerical(&self) -> bool {
        matches!(self, PipelineError::Model(ModelError::NonFiniteLoss { .. }))
    }
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T, PipelineError> {
    r.map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
}

/// Files a finished run leaves behind.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub data_dir: PathBuf,
    pub aug_dir: PathBuf,
    pub train_dir: PathBuf,
    pub eval_dir: PathBuf,
    pub results: Vec<EvalResult>,
    pub report: Report,
    /// Names of stages reused from the cache.
    pub cached: Vec<&'static str>,
}

impl Artifacts {
    pub fn train_path(&self) -> PathBuf {
        self.data_dir.join("train.tsv")
    }
    pub fn test_path(&self) -> PathBuf {
        self.data_dir.join("test.tsv")
    }
    pub fn augmented_path(&self) -> PathBuf {
        self.aug_dir.join("train.aug")
    }
    pub fn checkpoint_path(&self) -> PathBuf {
        self.train_dir.join("model.ckpt")
    }
    pub fn metrics_path(&self) -> PathBuf {
        self.train_dir.join("metrics.csv")
    }
}

struct Stage {
    name: &'static str,
    dir: PathBuf,
    key: String,
}

impl Stage {
    fn new(root: &Path, name: &'static str, key: String) -> Self {
        let digest = Sha256::digest(key.as_bytes());
        let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        Self { name, dir: root.join("cache").join(format!("{name}-{hex}")), key }
    }

    fn is_done(&self) -> bool {
        self.dir.join("DONE").is_file()
    }

    fn begin(&self) -> Result<Instant, PipelineError> {
        if self.dir.exists() {
            io(&self.dir, fs::remove_dir_all(&self.dir))?;
        }
        io(&self.dir, fs::create_dir_all(&self.dir))?;
        let key_path = self.dir.join("key.txt");
        io(&key_path, fs::write(&key_path, &self.key))?;
        Ok(Instant::now())
    }

    /// The DONE marker records the stage's wall-clock time.
    fn finish(&self, started: Instant) -> Result<(), PipelineError> {
        let p = self.dir.join("DONE");
        io(&p, fs::write(&p, format!("seconds={:.3}\n", started.elapsed().as_secs_f64())))
    }
}

/// Wall-clock seconds a finished stage took, read from its DONE marker.
pub fn stage_seconds(stage_dir: &Path) -> Option<f64> {
    let text = fs::read_to_string(stage_dir.join("DONE")).ok()?;
    text.trim().strip_prefix("seconds=")?.parse().ok()
}

pub fn dataset_mode(task: &TaskSpec) -> FileMode {
    FileMode::Text(task.text_style())
}

pub fn write_dataset(path: &Path, examples: &[Example], task: &TaskSpec) -> Result<(), PipelineError> {
    let f = io(path, File::create(path))?;
    let mut w = BufWriter::new(f);
    write_examples(&mut w, examples, dataset_mode(task))?;
    io(path, w.flush())
}

pub fn read_dataset(path: &Path) -> Result<Vec<Example>, PipelineError> {
    let f = io(path, File::open(path))?;
    Ok(read_examples(BufReader::new(f))?)
}

fn kv_block(prefix: &str, kv: &KvConfig) -> String {
    let mut out = KvConfig::new();
    out.merge_prefixed(prefix, kv);
    out.to_text()
}

/// Model shape with data-derived fields filled in.
pub fn resolve_model(m: &ExperimentManifest, vocab: &Vocab, longest: usize) -> lookahead_model::ModelConfig {
    let mut cfg = m.model.clone();
    if cfg.vocab_size == 0 {
        cfg.vocab_size = vocab.len();
    }
    if cfg.max_seq_len == 0 {
        cfg.max_seq_len = longest + 8;
    }
    cfg
}

/// Checkpoint metadata the decoder and evaluator rely on.
pub fn checkpoint_meta(m: &ExperimentManifest) -> KvConfig {
    let mut meta = KvConfig::new();
    meta.set("name", &m.name);
    meta.set("seed", m.seed);
    meta.merge_prefixed("task.", &m.task.to_kv());
    meta.merge_prefixed("aug.", &m.aug.to_kv());
    meta
}

pub fn run_pipeline(m: &ExperimentManifest, log: &mut dyn FnMut(&str)) -> Result<Artifacts, PipelineError> {
    m.validate()?;
    let seeds = m.seeds();
    let root = &m.out_dir;
    let vocab = m.task.vocab();
    let mut cached = Vec::new();

    // data
    let data_key = format!(
        "stage=data\nversion=1\n{}data.train_count={}\ndata.test_count={}\nseed.data={}\n",
        kv_block("task.", &m.task.to_kv()),
        m.train_count,
        m.test_count,
        seeds.data
    );
    let data = Stage::new(root, "data", data_key);
    if data.is_done() {
        cached.push(data.name);
        log(&format!("data: cached at {}", data.dir.display()));
    } else {
        let started = data.begin()?;
        log(&format!("data: generating {} train / {} test examples of {}", m.train_count, m.test_count, m.task));
        let train_ex = m.task.generate(m.train_count, index_seed(seeds.data, 0))?;
        let test_ex = m.task.generate(m.test_count, index_seed(seeds.data, 1))?;
        write_dataset(&data.dir.join("train.tsv"), &train_ex, &m.task)?;
        write_dataset(&data.dir.join("test.tsv"), &test_ex, &m.task)?;
        let vp = data.dir.join("vocab.txt");
        vocab.save(&vp).map_err(|e| PipelineError::Other(e.to_string()))?;
        data.finish(started)?;
    }

    // augment
    let aug_key = format!("stage=augment\nversion=1\n{}{}seed.augment={}\n", data.key, kv_block("aug.", &m.aug.to_kv()), seeds.augment);
    let aug = Stage::new(root, "augment", aug_key);
    if aug.is_done() {
        cached.push(aug.name);
        log(&format!("augment: cached at {}", aug.dir.display()));
    } else {
        let started = aug.begin()?;
        let train_ex = read_dataset(&data.dir.join("train.tsv"))?;
        let seqs = build_task_mixture(&m.task, &train_ex, &vocab, &m.aug, seeds.augment)?;
        let n_aug = seqs.iter().filter(|s| s.is_augmented()).count();
        log(&format!("augment: {n_aug} of {} sequences augmented (p = {})", seqs.len(), m.aug.p));
        let path = aug.dir.join("train.aug");
        let f = io(&path, File::create(&path))?;
        let mut w = BufWriter::new(f);
        write_augmented(&mut w, &seqs, &vocab)?;
        io(&path, w.flush())?;
        aug.finish(started)?;
    }

    // train
    let train_key = format!(
        "stage=train\nversion=1\n{}{}{}seed.init={}\nseed.shuffle={}\n",
        aug.key,
        kv_block("model.", &m.model.to_kv()),
        kv_block("train.", &m.train.to_kv()),
        seeds.init,
        seeds.shuffle
    );
    let tr = Stage::new(root, "train", train_key);
    if tr.is_done() {
        cached.push(tr.name);
        log(&format!("train: cached at {}", tr.dir.display()));
    } else {
        let started = tr.begin()?;
        let path = aug.dir.join("train.aug");
        let f = io(&path, File::open(&path))?;
        let seqs = read_augmented(BufReader::new(f), &vocab)?;
        let longest = seqs.iter().map(|s| s.ids.len()).max().unwrap_or(1);
        let cfg = resolve_model(m, &vocab, longest);
        let mut tc = m.train.clone();
        tc.seed = seeds.shuffle;
        let meta = checkpoint_meta(m);
        let out = TrainOutput { dir: tr.dir.clone(), vocab: &vocab, meta: &meta };
        let steps = seqs.len().div_ceil(tc.batch_size) * tc.epochs;
        log(&format!(
            "train: {} layers, d_model {}, {} steps over {} sequences ({})",
            cfg.n_layers, cfg.d_model, steps, seqs.len(), cfg.dtype
        ));
        let every = (steps / 20).max(1) as u64;
        let mut progress = |r: &lookahead_model::trainer::MetricRow| {
            if r.step.is_multiple_of(every) || r.step + 1 == steps as u64 {
                log(&format!("train: step {}/{steps} loss {:.4} lr {:.2e}", r.step + 1, r.loss, r.lr));
            }
        };
        match cfg.dtype {
            Dtype::F32 => {
                let mut model = Transformer::<f32>::new(cfg, seeds.init)?;
                train(&mut model, &seqs, &tc, Some(&out), &mut progress)?;
            }
            Dtype::F64 => {
                let mut model = Transformer::<f64>::new(cfg, seeds.init)?;
                train(&mut model, &seqs, &tc, Some(&out), &mut progress)?;
            }
        }
        tr.finish(started)?;
    }

    // eval
    let modes: Vec<String> = m.eval_modes().iter().map(ToString::to_string).collect();
    let eval_key = format!(
        "stage=eval\nversion=1\n{}{}eval.effective_modes={}\nseed.decode={}\n",
        tr.key,
        kv_block("eval.", &m.eval.to_kv()),
        modes.join(","),
        seeds.decode
    );
    let ev = Stage::new(root, "eval", eval_key);
    let results = if ev.is_done() {
        cached.push(ev.name);
        log(&format!("eval: cached at {}", ev.dir.display()));
        let p = ev.dir.join("results.csv");
        parse_results_csv(&io(&p, fs::read_to_string(&p))?).map_err(PipelineError::Other)?
    } else {
        let started = ev.begin()?;
        let test_ex = read_dataset(&data.dir.join("test.tsv"))?;
        let ckpt = tr.dir.join("model.ckpt");
        let results = match peek_dtype(&ckpt)? {
            Dtype::F32 => eval_checkpoint::<f32>(m, &ckpt, &test_ex, log)?,
            Dtype::F64 => eval_checkpoint::<f64>(m, &ckpt, &test_ex, log)?,
        };
        let rep = emit_report(&results);
        let p = ev.dir.join("results.csv");
        io(&p, fs::write(&p, &rep.csv))?;
        ev.finish(started)?;
        results
    };

    let report = emit_report(&results);
    let reports = root.join("reports");
    io(&reports, fs::create_dir_all(&reports))?;
    for (ext, body) in [("csv", &report.csv), ("md", &report.markdown)] {
        let p = reports.join(format!("{}.{ext}", m.name));
        io(&p, fs::write(&p, body))?;
    }
    let mp = reports.join(format!("{}.manifest", m.name));
    io(&mp, fs::write(&mp, m.to_text()))?;

    Ok(Artifacts { data_dir: data.dir, aug_dir: aug.dir, train_dir: tr.dir, eval_dir: ev.dir, results, report, cached })
}

/// Longest test completion plus room for a lookahead span.
pub fn auto_max_new_tokens(m: &ExperimentManifest, test: &[Example]) -> usize {
    if m.eval.max_new_tokens > 0 {
        return m.eval.max_new_tokens;
    }
    test.iter().map(|e| e.completion.len()).max().unwrap_or(0) + m.eval.z_cap + 8
}

fn eval_checkpoint<S: Scalar>(
    m: &ExperimentManifest,
    ckpt: &Path,
    test: &[Example],
    log: &mut dyn FnMut(&str),
) -> Result<Vec<EvalResult>, PipelineError> {
    let ck = Checkpoint::<S>::load(ckpt)?;
    let variant = m.variant();
    let mut results = Vec::new();
    for mode in m.eval_modes() {
        let mut completer = ModelCompleter {
            decoder: Decoder::new(&ck.model),
            vocab: &ck.vocab,
            spec: m.aug.clone(),
            decode_seed: m.seeds().decode,
            max_new_tokens: auto_max_new_tokens(m, test),
            z_cap: m.eval.z_cap,
            strategy: m.eval.strategy,
            force_closed: 0,
        };
        let rs = evaluate(&m.task, &mut completer, test, mode, variant, m.seed)?;
        for r in &rs {
            log(&format!(
                "eval: {} {} {}: accuracy {:.3} ({}/{}, {} malformed, {} force-closed spans)",
                r.task_id, r.variant, r.mode, r.accuracy, r.correct, r.n_examples, r.malformed, completer.force_closed
            ));
        }
        results.extend(rs);
    }
    Ok(results)
}
