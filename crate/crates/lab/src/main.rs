use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use lookahead_core::augment::{read_augmented, strip_ids, write_augmented, AugError};
use lookahead_core::kv::{KvConfig, KvError};
use lookahead_core::stargraph::StarParams;
use lookahead_core::task::{build_task_mixture, TaskError, DEFAULT_EDGE_PROB};
use lookahead_core::vocab::{render, tokenize};
use lookahead_core::{AugSpec, TaskSpec};
use lookahead_lab::eval::{evaluate, InferenceMode, ModelCompleter, Variant};
use lookahead_lab::manifest::{ExperimentManifest, ManifestError, SubSeeds};
use lookahead_lab::pipeline::{checkpoint_meta, read_dataset, resolve_model, write_dataset, PipelineError};
use lookahead_lab::report::{emit_report, parse_results_csv};
use lookahead_model::checkpoint::{peek_dtype, Checkpoint};
use lookahead_model::decoder::{DecodeError, DecodeMode, DecodeRequest, Decoder, Strategy, DEFAULT_Z_CAP};
use lookahead_model::trainer::{train, TrainOutput};
use lookahead_model::{Dtype, ModelError, Scalar, Transformer};

/// Lookahead-span augmentation lab: task generation, augmentation,
/// training, decoding and evaluation.
#[derive(Parser)]
#[command(name = "lookahead", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate star-graph path-finding examples.
    GenStar(GenStar),
    /// Generate strongly-connected-components trace examples.
    GenScc(GenScc),
    /// Build the training mixture of plain and augmented sequences.
    Augment(Augment),
    /// Train a model on an augmented mixture.
    Train(Train),
    /// Decode prompts with a checkpoint; writes JSON lines.
    Decode(Decode),
    /// Score a checkpoint on a test set.
    Eval(Eval),
    /// Merge result CSVs into a report table.
    Report(Report),
    /// Run a whole experiment from a manifest.
    Run(Run),
}

#[derive(Args)]
struct GenOut {
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset file (`prefix<TAB>completion` per line).
    #[arg(long)]
    out: PathBuf,
    /// Also write the task vocabulary here.
    #[arg(long)]
    vocab_out: Option<PathBuf>,
}

#[derive(Args)]
struct GenStar {
    #[arg(long)]
    degree: usize,
    #[arg(long)]
    path_len: usize,
    #[arg(long, default_value_t = lookahead_core::stargraph::DEFAULT_LABEL_POOL)]
    label_pool: usize,
    #[command(flatten)]
    out: GenOut,
}

#[derive(Args)]
struct GenScc {
    /// Comma-separated graph sizes; `count` examples are drawn per size.
    #[arg(long, value_delimiter = ',', default_values_t = lookahead_core::task::DEFAULT_SCC_SIZES)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_EDGE_PROB)]
    edge_prob: f64,
    #[command(flatten)]
    out: GenOut,
}

#[derive(Args)]
struct Augment {
    /// Manifest-format file; reads the `task.` and `aug.` sections.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Defaults to the `augment` stream of the manifest seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Train {
    /// Manifest-format file; reads `task.`, `aug.`, `model.` and `train.`.
    #[arg(long)]
    config: PathBuf,
    /// Augmented mixture written by `augment`.
    #[arg(long)]
    data: PathBuf,
    /// Receives model.ckpt and metrics.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Decode {
    #[arg(long)]
    ckpt: PathBuf,
    /// ar, tgen or tspec.
    #[arg(long, default_value = "ar")]
    mode: String,
    /// Span content for tspec, e.g. "5,7,".
    #[arg(long)]
    z: Option<String>,
    /// One prompt per line; a TAB and completion after it are ignored.
    #[arg(long)]
    prompt_file: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// greedy or sample:<temperature>:<seed>.
    #[arg(long, default_value = "greedy")]
    strategy: Strategy,
    #[arg(long, default_value_t = 128)]
    max_new_tokens: usize,
    #[arg(long, default_value_t = DEFAULT_Z_CAP)]
    z_cap: usize,
    /// Override the task's decision offset.
    #[arg(long)]
    decision_offset: Option<usize>,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    ckpt: PathBuf,
    /// Test set written by gen-star / gen-scc.
    #[arg(long)]
    data: PathBuf,
    /// ar, tgen, tspec or all.
    #[arg(long, default_value = "all")]
    mode: String,
    /// Experiment seed; the decode stream (specified spans, sampling) is
    /// derived from it. Defaults to the seed stored in the checkpoint.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "greedy")]
    strategy: Strategy,
    #[arg(long, default_value_t = DEFAULT_Z_CAP)]
    z_cap: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Report {
    /// Result CSVs written by `eval` or `run`.
    #[arg(long, num_args = 1.., required = true)]
    results: Vec<PathBuf>,
    #[arg(long)]
    out_md: PathBuf,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
struct Run {
    #[arg(long)]
    manifest: PathBuf,
    /// Override the manifest's out_dir.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Configuration problems map to exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct ConfigError(String);

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            if e.is_numerical() {
                return 3;
            }
            if matches!(e, PipelineError::Manifest(_)) {
                return 2;
            }
        }
        if let Some(e) = cause.downcast_ref::<ModelError>() {
            match e {
                ModelError::NonFiniteLoss { .. } => return 3,
                ModelError::Config(_) => return 2,
                _ => {}
            }
        }
        if cause.is::<ConfigError>()
            || cause.is::<KvError>()
            || cause.is::<ManifestError>()
            || cause.is::<TaskError>()
            || matches!(cause.downcast_ref::<AugError>(), Some(AugError::Spec(_)))
            || matches!(cause.downcast_ref::<DecodeError>(), Some(DecodeError::Request(_)))
        {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenStar(a) => {
            let task = TaskSpec::Star(StarParams { degree: a.degree, path_len: a.path_len, label_pool: a.label_pool });
            generate(&task, &a.out)
        }
        Command::GenScc(a) => generate(&TaskSpec::Scc { sizes: a.sizes, edge_prob: a.edge_prob }, &a.out),
        Command::Augment(a) => augment(a),
        Command::Train(a) => train_cmd(a),
        Command::Decode(a) => {
            let ckpt = a.ckpt.clone();
            match peek_dtype(&ckpt)? {
                Dtype::F32 => decode::<f32>(a),
                Dtype::F64 => decode::<f64>(a),
            }
        }
        Command::Eval(a) => {
            let ckpt = a.ckpt.clone();
            match peek_dtype(&ckpt)? {
                Dtype::F32 => eval::<f32>(a),
                Dtype::F64 => eval::<f64>(a),
            }
        }
        Command::Report(a) => report(a),
        Command::Run(a) => run(a),
    }
}

fn read_config(path: &Path) -> Result<KvConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(KvConfig::parse(&text)?)
}

/// Missing sections fall back to manifest defaults for the task.
fn manifest_from_config(path: &Path) -> Result<ExperimentManifest> {
    let mut kv = read_config(path)?;
    if kv.get_str("manifest.version").is_none() {
        kv.set("manifest.version", lookahead_lab::manifest::MANIFEST_VERSION);
    }
    ExperimentManifest::from_kv(&kv).with_context(|| format!("in config {}", path.display()))
}

fn generate(task: &TaskSpec, out: &GenOut) -> Result<()> {
    task.validate()?;
    if out.count == 0 {
        return Err(ConfigError("--count must be positive".into()).into());
    }
    let examples = task.generate(out.count, out.seed)?;
    write_dataset(&out.out, &examples, task)?;
    if let Some(v) = &out.vocab_out {
        task.vocab().save(v).map_err(|e| anyhow!("{e}"))?;
    }
    eprintln!("wrote {} examples of {task} to {}", examples.len(), out.out.display());
    Ok(())
}

fn augment(a: Augment) -> Result<()> {
    let m = manifest_from_config(&a.config)?;
    let vocab = m.task.vocab();
    let examples = read_dataset(&a.data)?;
    let seed = a.seed.unwrap_or(m.seeds().augment);
    let seqs = build_task_mixture(&m.task, &examples, &vocab, &m.aug, seed)?;
    let mut w = BufWriter::new(fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
    write_augmented(&mut w, &seqs, &vocab)?;
    w.flush()?;
    let n_aug = seqs.iter().filter(|s| s.is_augmented()).count();
    eprintln!("wrote {} sequences ({n_aug} augmented) to {}", seqs.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: Train) -> Result<()> {
    let m = manifest_from_config(&a.config)?;
    let vocab = m.task.vocab();
    let f = fs::File::open(&a.data).with_context(|| format!("opening {}", a.data.display()))?;
    let seqs = read_augmented(std::io::BufReader::new(f), &vocab)?;
    let longest = seqs.iter().map(|s| s.ids.len()).max().ok_or_else(|| ConfigError("empty training file".into()))?;
    let cfg = resolve_model(&m, &vocab, longest);
    let mut tc = m.train.clone();
    tc.seed = m.seeds().shuffle;
    let meta = checkpoint_meta(&m);
    let out = TrainOutput { dir: a.out.clone(), vocab: &vocab, meta: &meta };
    let steps = seqs.len().div_ceil(tc.batch_size) * tc.epochs;
    let every = (steps / 20).max(1) as u64;
    let log = |r: &lookahead_model::trainer::MetricRow| {
        if r.step.is_multiple_of(every) {
            eprintln!("step {}/{steps} loss {:.4} lr {:.2e}", r.step + 1, r.loss, r.lr);
        }
    };
    let report = match cfg.dtype {
        Dtype::F32 => train(&mut Transformer::<f32>::new(cfg, m.seeds().init)?, &seqs, &tc, Some(&out), log)?,
        Dtype::F64 => train(&mut Transformer::<f64>::new(cfg, m.seeds().init)?, &seqs, &tc, Some(&out), log)?,
    };
    eprintln!("trained {} steps, final loss {:.4}; wrote {}", report.steps, report.final_loss().unwrap_or(f64::NAN), out.checkpoint_path().display());
    Ok(())
}

/// Task and augmentation recorded in a checkpoint.
fn checkpoint_task(meta: &KvConfig) -> Result<(TaskSpec, AugSpec)> {
    let task = TaskSpec::from_kv(&meta.section("task."))?;
    let aug = AugSpec::from_kv(&meta.section("aug."))?;
    Ok((task, aug))
}

fn parse_mode(s: &str) -> Result<InferenceMode> {
    s.parse().map_err(|e: String| ConfigError(e).into())
}

fn decode<S: Scalar>(a: Decode) -> Result<()> {
    let ck = Checkpoint::<S>::load(&a.ckpt)?;
    let (task, _) = checkpoint_task(&ck.meta)?;
    let mode = match parse_mode(&a.mode)? {
        InferenceMode::AutoReg => DecodeMode::Autoregressive,
        InferenceMode::Generated => DecodeMode::TGenerated,
        InferenceMode::Specified => {
            let z = a.z.as_deref().ok_or_else(|| ConfigError("--mode tspec needs --z".into()))?;
            DecodeMode::TSpecified(ck.vocab.encode(&tokenize(z))?.0)
        }
    };
    let text = fs::read_to_string(&a.prompt_file).with_context(|| format!("reading {}", a.prompt_file.display()))?;
    let decoder = Decoder::new(&ck.model);
    let style = task.text_style();
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let prompt_toks = tokenize(line.split('\t').next().unwrap_or(""));
        let offset = match a.decision_offset {
            Some(o) => o,
            None => task.prompt_decision_offset(&prompt_toks)?,
        };
        let req = DecodeRequest {
            mode: mode.clone(),
            prompt: ck.vocab.encode(&prompt_toks)?.0,
            decision_offset: Some(offset),
            max_new_tokens: a.max_new_tokens,
            strategy: a.strategy,
            z_cap: a.z_cap,
        };
        let res = decoder.decode(&req)?;
        let render_ids = |ids: &[u32]| -> Result<String> { Ok(render(&ck.vocab.decode(ids)?, style)) };
        let record = serde_json::json!({
            "prompt": render(&prompt_toks, style),
            "raw_output": render_ids(&res.raw)?,
            "stripped_output": render_ids(&strip_ids(&res.raw))?,
            "z_used": res.z.as_deref().map(render_ids).transpose()?,
            "force_closed": res.force_closed,
        });
        writeln!(out, "{record}")?;
    }
    out.flush()?;
    Ok(())
}

fn eval<S: Scalar>(a: Eval) -> Result<()> {
    let ck = Checkpoint::<S>::load(&a.ckpt)?;
    let (task, aug) = checkpoint_task(&ck.meta)?;
    let variant = Variant::of(&aug);
    let modes = if a.mode == "all" {
        if variant == Variant::Ntp { vec![InferenceMode::AutoReg] } else { InferenceMode::ALL.to_vec() }
    } else {
        vec![parse_mode(&a.mode)?]
    };
    let seed = match a.seed {
        Some(s) => s,
        None => ck.meta.get_or("seed", 0)?,
    };
    let decode_seed = SubSeeds::from_master(seed).decode;
    let test = read_dataset(&a.data)?;
    let longest = test.iter().map(|e| e.completion.len()).max().unwrap_or(0);
    let mut results = Vec::new();
    for mode in modes {
        let mut completer = ModelCompleter {
            decoder: Decoder::new(&ck.model),
            vocab: &ck.vocab,
            spec: aug.clone(),
            decode_seed,
            max_new_tokens: longest + a.z_cap + 8,
            z_cap: a.z_cap,
            strategy: a.strategy,
            force_closed: 0,
        };
        let rs = evaluate(&task, &mut completer, &test, mode, variant, seed)?;
        for r in &rs {
            eprintln!("{} {} {}: {:.3} ({}/{})", r.task_id, r.variant, r.mode, r.accuracy, r.correct, r.n_examples);
        }
        results.extend(rs);
    }
    fs::write(&a.out, emit_report(&results).csv).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn report(a: Report) -> Result<()> {
    let mut all = Vec::new();
    for p in &a.results {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        all.extend(parse_results_csv(&text).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?);
    }
    let rep = emit_report(&all);
    fs::write(&a.out_md, &rep.markdown)?;
    if let Some(p) = &a.out_csv {
        fs::write(p, &rep.csv)?;
    }
    print!("{}", rep.markdown);
    Ok(())
}

fn run(a: Run) -> Result<()> {
    let text = fs::read_to_string(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let mut m = ExperimentManifest::parse(&text).map_err(PipelineError::from)?;
    if let Some(dir) = a.out_dir {
        m.out_dir = dir;
    }
    let art = lookahead_lab::run_pipeline(&m, &mut |msg| eprintln!("{msg}"))?;
    if art.cached.len() == 4 {
        eprintln!("all stages cached; nothing to do");
    }
    print!("{}", art.report.markdown);
    Ok(())
}
