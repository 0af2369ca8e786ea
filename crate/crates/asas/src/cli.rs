//! Command-line entry points. Precedence for every setting: command-line
//! flag, then the config file (`--config` or `$ASAS_CONFIG`), then the
//! built-in default.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use crate::config::{Precision, RunConfig};
use crate::corpus::{load_dataset, load_embeddings_file, QAExample, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{accuracy_by_length, rank_metrics, rouge_corpus, DEFAULT_LENGTH_EDGES};
use crate::model::{summarize_pair, DecodeOptions, ModelDims, ModelParams, GROUPS};
use crate::numerics::{OptimizerState, Scalar};
use crate::rng::{restore, stream_rng, RngCursor, Stream};
use crate::training::{prepare_pairs, rank_pairs, train, TrainPair};

#[derive(Parser)]
#[command(name = "asas", version, about = "Joint answer selection and answer summarization")]
struct Cli {
    /// JSON run config; defaults to $ASAS_CONFIG when unset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flag-level overrides of config fields.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long, global = true)]
    train: Option<String>,
    #[arg(long, global = true)]
    dev: Option<String>,
    #[arg(long, global = true)]
    test: Option<String>,
    #[arg(long, global = true)]
    embeddings: Option<String>,
    #[arg(long, global = true)]
    vocab: Option<String>,
    #[arg(long, global = true)]
    out_dir: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    patience: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    hidden: Option<usize>,
    #[arg(long, global = true)]
    emb_dim: Option<usize>,
    #[arg(long, global = true)]
    vocab_size: Option<usize>,
    #[arg(long, global = true)]
    beam_size: Option<usize>,
    #[arg(long, global = true)]
    dropout: Option<f64>,
    /// Element precision for training and inference: f32 or f64.
    #[arg(long, global = true)]
    precision: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the vocabulary from the training split.
    BuildVocab,
    /// Train the joint model; writes per-epoch checkpoints, best.ckpt
    /// and metrics.jsonl under the output directory.
    Train {
        /// Warm-start from an existing checkpoint.
        #[arg(long)]
        init_checkpoint: Option<PathBuf>,
    },
    /// Score every candidate of a split with a checkpoint; writes
    /// scores.jsonl and rank_report.json.
    Rank {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset file; defaults to the split named by --split.
        #[arg(long)]
        data: Option<PathBuf>,
        /// train, dev or test (default dev).
        #[arg(long, default_value = "dev")]
        split: String,
    },
    /// Beam-search summaries for every candidate; writes
    /// summaries.jsonl.
    Summarize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// ROUGE report for generated summaries against the references in a
    /// dataset split; writes rouge_report.json.
    EvalSum {
        /// summaries.jsonl produced by the summarize command.
        #[arg(long)]
        summaries: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Fine-tune a checkpoint on the configured training split with
    /// parameter groups frozen.
    Transfer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated group names, or "all"; "none" freezes
        /// nothing. The summarization part is decoder,pointer,output.
        #[arg(long, default_value = "decoder,pointer,output")]
        freeze: String,
    },
}

/// Run the CLI; returns the process exit code. Failures print one
/// machine-readable JSON record to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    match dispatch(cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.to_string(), "kind": e.kind() }));
            1
        }
    }
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os("ASAS_CONFIG").map(PathBuf::from));
    let mut cfg = match path {
        Some(p) => RunConfig::load(&p)?,
        None => RunConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(v) = &o.train {
        cfg.train_path = Some(v.clone());
    }
    if let Some(v) = &o.dev {
        cfg.dev_path = Some(v.clone());
    }
    if let Some(v) = &o.test {
        cfg.test_path = Some(v.clone());
    }
    if let Some(v) = &o.embeddings {
        cfg.embeddings_path = Some(v.clone());
    }
    if let Some(v) = &o.vocab {
        cfg.vocab_path = Some(v.clone());
    }
    if let Some(v) = &o.out_dir {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = o.patience {
        cfg.patience = v;
    }
    if let Some(v) = o.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = o.hidden {
        cfg.hidden = v;
    }
    if let Some(v) = o.emb_dim {
        cfg.emb_dim = v;
    }
    if let Some(v) = o.vocab_size {
        cfg.vocab_size = v;
    }
    if let Some(v) = o.beam_size {
        cfg.beam_size = v;
    }
    if let Some(v) = o.dropout {
        cfg.dropout = v;
    }
    if let Some(v) = &o.precision {
        cfg.precision = match v.as_str() {
            "f32" => Precision::F32,
            "f64" => Precision::F64,
            other => return Err(Error::Config(format!("unknown precision '{other}'"))),
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<Value> {
    let cfg = effective_config(&cli)?;
    match cfg.precision {
        Precision::F32 => dispatch_typed::<f32>(cli.command, cfg),
        Precision::F64 => dispatch_typed::<f64>(cli.command, cfg),
    }
}

fn dispatch_typed<S: Scalar>(command: Command, cfg: RunConfig) -> Result<Value> {
    match command {
        Command::BuildVocab => cmd_build_vocab(&cfg),
        Command::Train { init_checkpoint } => cmd_train::<S>(&cfg, init_checkpoint.as_deref()),
        Command::Rank { checkpoint, data, split } => {
            cmd_rank::<S>(&cfg, &checkpoint, data.as_deref(), &split)
        }
        Command::Summarize { checkpoint, data, split } => {
            cmd_summarize::<S>(&cfg, &checkpoint, data.as_deref(), &split)
        }
        Command::EvalSum { summaries, data, split } => {
            cmd_eval_sum(&cfg, &summaries, data.as_deref(), &split)
        }
        Command::Transfer { checkpoint, freeze } => cmd_transfer::<S>(&cfg, &checkpoint, &freeze),
    }
}

// ── shared plumbing ──────────────────────────────────────────────────

fn out_path(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    Ok(Path::new(&cfg.out_dir).join(name))
}

fn vocab_file(cfg: &RunConfig) -> PathBuf {
    match &cfg.vocab_path {
        Some(p) => PathBuf::from(p),
        None => Path::new(&cfg.out_dir).join("vocab.txt"),
    }
}

fn required_path<'a>(p: &'a Option<String>, what: &str) -> Result<&'a str> {
    p.as_deref().ok_or_else(|| Error::Config(format!("{what} is not configured")))
}

fn split_path(cfg: &RunConfig, split: &str) -> Result<PathBuf> {
    let p = match split {
        "train" => required_path(&cfg.train_path, "train_path")?,
        "dev" => required_path(&cfg.dev_path, "dev_path")?,
        "test" => required_path(&cfg.test_path, "test_path")?,
        other => return Err(Error::Config(format!("unknown split '{other}'"))),
    };
    Ok(PathBuf::from(p))
}

fn load_split(cfg: &RunConfig, data: Option<&Path>, split: &str) -> Result<Vec<QAExample>> {
    let path = match data {
        Some(p) => p.to_path_buf(),
        None => split_path(cfg, split)?,
    };
    load_dataset(&path, cfg.truncation())
}

fn load_vocab(cfg: &RunConfig) -> Result<Vocabulary> {
    let path = vocab_file(cfg);
    Vocabulary::load(&path).map_err(|e| {
        Error::Config(format!(
            "cannot load vocabulary from {} (run build-vocab first): {e}",
            path.display()
        ))
    })
}

fn dims_for(cfg: &RunConfig, vocab: &Vocabulary) -> ModelDims {
    ModelDims { vocab: vocab.len(), emb: cfg.emb_dim, hidden: cfg.hidden }
}

fn meta_for(cfg: &RunConfig, cursors: BTreeMap<String, u128>) -> CheckpointMeta {
    CheckpointMeta {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        config: cfg.as_value(),
        rng_cursors: cursors,
    }
}

fn write_jsonl(path: &Path, lines: &[Value]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for line in lines {
        writeln!(f, "{line}")?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(serde_json::to_string_pretty(value)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

fn provenance(cfg: &RunConfig) -> Value {
    json!({ "config_hash": cfg.hash(), "seed": cfg.seed })
}

// ── commands ─────────────────────────────────────────────────────────

fn cmd_build_vocab(cfg: &RunConfig) -> Result<Value> {
    let train = load_split(cfg, None, "train")?;
    let tokens = train.iter().flat_map(|ex| {
        ex.question.iter().cloned().chain(ex.candidates.iter().flat_map(|c| {
            c.tokens.iter().cloned().chain(c.summary.iter().flatten().cloned())
        }))
    });
    let vocab = Vocabulary::build(tokens, cfg.vocab_size)?;
    let path = vocab_file(cfg);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    vocab.save(&path)?;
    Ok(json!({
        "command": "build-vocab",
        "vocab_path": path.display().to_string(),
        "vocab_size": vocab.len(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
    }))
}

struct LoadedModel<S: Scalar> {
    params: ModelParams<S>,
    optimizer: OptimizerState<S>,
    vocab: Vocabulary,
}

fn fresh_model<S: Scalar>(cfg: &RunConfig) -> Result<LoadedModel<S>> {
    let vocab = load_vocab(cfg)?;
    let dims = dims_for(cfg, &vocab);
    let mut init_rng = stream_rng(cfg.seed, Stream::Init);
    let mut params = ModelParams::<S>::init(dims, &mut init_rng);
    if let Some(embed_path) = &cfg.embeddings_path {
        let emb = load_embeddings_file::<S>(
            Path::new(embed_path),
            &vocab,
            cfg.emb_dim,
            &mut init_rng,
        )?;
        params.set_embeddings(emb.matrix);
    }
    let optimizer = OptimizerState::new(cfg.optimizer());
    Ok(LoadedModel { params, optimizer, vocab })
}

type RngCursors = BTreeMap<String, u128>;

/// Load checkpoint + vocab; stream positions only carry over when the
/// run seed matches the checkpoint's.
fn checkpointed_model<S: Scalar>(
    cfg: &RunConfig,
    ckpt: &Path,
) -> Result<(LoadedModel<S>, Option<RngCursors>)> {
    let vocab = load_vocab(cfg)?;
    let dims = dims_for(cfg, &vocab);
    let (params, optimizer, meta) = load_checkpoint::<S>(ckpt, Some(dims))?;
    let cursors = (meta.seed == cfg.seed).then(|| meta.rng_cursors.clone());
    Ok((LoadedModel { params, optimizer, vocab }, cursors))
}

fn run_training<S: Scalar>(
    cfg: &RunConfig,
    mut model: LoadedModel<S>,
    freeze: std::collections::BTreeSet<String>,
    restored_cursors: Option<BTreeMap<String, u128>>,
) -> Result<Value> {
    let train_examples = load_split(cfg, None, "train")?;
    let dev_examples = match &cfg.dev_path {
        Some(_) => load_split(cfg, None, "dev")?,
        None => Vec::new(),
    };
    let train_pairs = prepare_pairs(&train_examples, &model.vocab, cfg.neg_per_question);
    let dev_pairs = prepare_pairs(&dev_examples, &model.vocab, None);

    let mut settings = cfg.train_settings();
    settings.freeze = freeze;

    let (mut shuffle_rng, mut dropout_rng) = match restored_cursors {
        Some(cursors) => (
            restore(cfg.seed, Stream::Shuffle, RngCursor {
                word_pos: *cursors.get("shuffle").unwrap_or(&0),
            }),
            restore(cfg.seed, Stream::Dropout, RngCursor {
                word_pos: *cursors.get("dropout").unwrap_or(&0),
            }),
        ),
        None => (stream_rng(cfg.seed, Stream::Shuffle), stream_rng(cfg.seed, Stream::Dropout)),
    };

    let ckpt_dir = out_path(cfg, "checkpoints")?;
    std::fs::create_dir_all(&ckpt_dir)?;
    let metrics_path = out_path(cfg, "metrics.jsonl")?;
    let mut metrics_file = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
    let prov = provenance(cfg);

    let outcome = {
        let cfg_for_cb = cfg.clone();
        let ckpt_dir = ckpt_dir.clone();
        let mut on_epoch = |record: &crate::training::EpochRecord,
                            params: &ModelParams<S>,
                            optimizer: &OptimizerState<S>,
                            cursors: &BTreeMap<String, u128>|
         -> Result<()> {
            let mut line = serde_json::to_value(record)?;
            let obj = line.as_object_mut().expect("record is an object");
            obj.insert("config_hash".into(), prov["config_hash"].clone());
            obj.insert("seed".into(), prov["seed"].clone());
            writeln!(metrics_file, "{line}")?;
            metrics_file.flush()?;
            let path = ckpt_dir.join(format!("epoch_{:03}.ckpt", record.epoch));
            save_checkpoint(&path, params, optimizer, &meta_for(&cfg_for_cb, cursors.clone()))?;
            Ok(())
        };
        train(
            &mut model.params,
            &mut model.optimizer,
            &train_pairs,
            &dev_pairs,
            &settings,
            &mut shuffle_rng,
            &mut dropout_rng,
            Some(&mut on_epoch),
        )?
    };

    let best_path = ckpt_dir.join("best.ckpt");
    save_checkpoint(
        &best_path,
        &outcome.best_params,
        &outcome.best_optimizer,
        &meta_for(cfg, outcome.best_rng_cursors.clone()),
    )?;

    Ok(json!({
        "command": "train",
        "epochs_run": outcome.history.len(),
        "best_epoch": outcome.best_epoch,
        "best_dev_map": outcome.best_dev_map,
        "stopped_early": outcome.stopped_early,
        "best_checkpoint": best_path.display().to_string(),
        "metrics_path": metrics_path.display().to_string(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
    }))
}

fn cmd_train<S: Scalar>(cfg: &RunConfig, init_checkpoint: Option<&Path>) -> Result<Value> {
    let (model, cursors) = match init_checkpoint {
        Some(ckpt) => checkpointed_model::<S>(cfg, ckpt)?,
        None => (fresh_model::<S>(cfg)?, None),
    };
    run_training(cfg, model, Default::default(), cursors)
}

fn cmd_transfer<S: Scalar>(cfg: &RunConfig, ckpt: &Path, freeze: &str) -> Result<Value> {
    let freeze_set: std::collections::BTreeSet<String> = match freeze.trim() {
        "all" => GROUPS.iter().map(|s| s.to_string()).collect(),
        "none" | "" => Default::default(),
        list => list.split(',').map(|s| s.trim().to_string()).collect(),
    };
    crate::model::validate_groups(&freeze_set.iter().cloned().collect::<Vec<_>>())?;
    let (model, cursors) = checkpointed_model::<S>(cfg, ckpt)?;
    run_training(cfg, model, freeze_set, cursors)
}

fn cmd_rank<S: Scalar>(
    cfg: &RunConfig,
    ckpt: &Path,
    data: Option<&Path>,
    split: &str,
) -> Result<Value> {
    let (model, _) = checkpointed_model::<S>(cfg, ckpt)?;
    let examples = load_split(cfg, data, split)?;
    let pairs = prepare_pairs(&examples, &model.vocab, None);
    let lists = rank_pairs(&model.params, &pairs, cfg.max_summary_len);

    let mut lines = vec![provenance(cfg)];
    for list in &lists {
        let scores: BTreeMap<&str, f64> =
            list.items.iter().map(|i| (i.answer_id.as_str(), i.score)).collect();
        lines.push(json!({ "question_id": list.question_id, "scores": scores }));
    }
    let scores_path = out_path(cfg, "scores.jsonl")?;
    write_jsonl(&scores_path, &lines)?;

    let report = rank_metrics(&lists)?;
    let by_length = accuracy_by_length(&lists, &DEFAULT_LENGTH_EDGES);
    let report_json = json!({
        "map": report.map,
        "mrr": report.mrr,
        "p_at_1": report.p_at_1,
        "by_length": by_length,
        "evaluated": report.evaluated,
        "skipped_no_relevant": report.skipped_no_relevant,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
    });
    let report_path = out_path(cfg, "rank_report.json")?;
    write_json(&report_path, &report_json)?;

    Ok(json!({
        "command": "rank",
        "map": report.map,
        "mrr": report.mrr,
        "p_at_1": report.p_at_1,
        "scores_path": scores_path.display().to_string(),
        "report_path": report_path.display().to_string(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
    }))
}

fn cmd_summarize<S: Scalar>(
    cfg: &RunConfig,
    ckpt: &Path,
    data: Option<&Path>,
    split: &str,
) -> Result<Value> {
    let (model, _) = checkpointed_model::<S>(cfg, ckpt)?;
    let examples = load_split(cfg, data, split)?;
    let pairs = prepare_pairs(&examples, &model.vocab, None);
    let opts = DecodeOptions {
        beam_size: cfg.beam_size,
        max_len: cfg.max_summary_len,
        p_gen_override: None,
    };
    let mut lines = vec![provenance(cfg)];
    for pair in &pairs {
        let decoded = summarize_pair(&model.params, &pair.input, opts);
        let tokens =
            crate::corpus::decode_extended(&decoded.token_ids, &model.vocab, &pair.oov_tokens);
        lines.push(json!({
            "question_id": pair.question_id,
            "answer_id": pair.answer_id,
            "summary": tokens.join(" "),
            "p_gen": decoded.p_gen,
            "log_prob": decoded.log_prob,
        }));
    }
    let path = out_path(cfg, "summaries.jsonl")?;
    write_jsonl(&path, &lines)?;
    Ok(json!({
        "command": "summarize",
        "pairs": pairs.len(),
        "summaries_path": path.display().to_string(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
    }))
}

fn cmd_eval_sum(
    cfg: &RunConfig,
    summaries: &Path,
    data: Option<&Path>,
    split: &str,
) -> Result<Value> {
    let examples = load_split(cfg, data, split)?;
    let mut references: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    for ex in &examples {
        for cand in &ex.candidates {
            if let Some(sum) = &cand.summary {
                references
                    .insert((ex.question_id.clone(), cand.answer_id.clone()), sum.clone());
            }
        }
    }

    let text = std::fs::read_to_string(summaries)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", summaries.display())))?;
    let mut pairs: Vec<(Vec<String>, Vec<String>)> = Vec::new();
    let mut missing_reference = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line)
            .map_err(|e| Error::data_at(i + 1, format!("bad summary record: {e}")))?;
        let (Some(qid), Some(aid)) = (v["question_id"].as_str(), v["answer_id"].as_str()) else {
            continue; // provenance line
        };
        let summary = v["summary"]
            .as_str()
            .ok_or_else(|| Error::data_at(i + 1, "summary record without text"))?;
        let cand_tokens: Vec<String> =
            summary.split_whitespace().map(String::from).collect();
        match references.get(&(qid.to_string(), aid.to_string())) {
            Some(reference) => pairs.push((cand_tokens, reference.clone())),
            None => missing_reference += 1,
        }
    }
    let report = rouge_corpus(&pairs);
    let report_json = json!({
        "rouge_1": report.rouge_1,
        "rouge_2": report.rouge_2,
        "rouge_l": report.rouge_l,
        "pairs": report.pairs,
        "without_reference": missing_reference,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
    });
    let path = out_path(cfg, "rouge_report.json")?;
    write_json(&path, &report_json)?;
    Ok(json!({
        "command": "eval-sum",
        "pairs": report.pairs,
        "rouge_1_f1": report.rouge_1.f1,
        "rouge_2_f1": report.rouge_2.f1,
        "rouge_l_f1": report.rouge_l.f1,
        "report_path": path.display().to_string(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
    }))
}

// keep the public ranking surface available to integration tests
pub use crate::training::trainer::rank_pairs as rank_prepared_pairs;
pub type PreparedPair = TrainPair;
