//! The pipeline steps behind each subcommand. Every step reads and writes
//! files under the configured output directory.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ct_core::ast::AstRecord;
use ct_core::corpus::vocab::NODE_TYPE_SPECIALS;
use ct_core::corpus::{build_vocab, Language, Vocabulary};
use ct_core::metrics::{score, MatchMode, PredictionRecord, ScoreReport};
use ct_core::shard::{read_shard_file, vocab_hash, write_shard_file, ShardHeader, Snippet, Stage2Options};
use ct_core::snippet::{stage1_from_ast_record, stage1_from_source, Reject, RejectReason, SourceRecord, Stage1Record};
use ct_model::checkpoint;
use ct_model::train::{predict_names, train_multilingual, LogEntry, TrainError, Trainer};
use ct_model::{Model, ModelError};

use crate::config::{PipelineConfig, Split};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub split: String,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: u64,
    pub final_loss: f64,
    pub best_f1: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EmbeddingRecord {
    id: String,
    embedding: Vec<f64>,
}

enum Input {
    Source(SourceRecord),
    Ast(AstRecord),
}

pub fn stage1_path(cfg: &PipelineConfig, split: Split) -> PathBuf {
    cfg.paths.out.join("stage1").join(format!("{}.jsonl", split.name()))
}

pub fn stage1_rejects_path(cfg: &PipelineConfig, split: Split) -> PathBuf {
    cfg.paths.out.join("stage1").join(format!("{}.rejects.jsonl", split.name()))
}

pub fn vocab_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.paths.out.join("vocab").join("subtokens.txt")
}

pub fn node_vocab_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.paths.out.join("vocab").join("node_types.txt")
}

pub fn shard_path(cfg: &PipelineConfig, split: Split, lang: Language) -> PathBuf {
    cfg.paths.out.join("shards").join(format!("{}.{}.shard", split.name(), lang))
}

pub fn stage2_rejects_path(cfg: &PipelineConfig, split: Split) -> PathBuf {
    cfg.paths.out.join("shards").join(format!("{}.rejects.jsonl", split.name()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::data(dir.display(), e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::data(path.display(), e))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut w = create(path)?;
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| CliError::data(path.display(), e))?;
        writeln!(w, "{line}").map_err(|e| CliError::data(path.display(), e))?;
    }
    w.flush().map_err(|e| CliError::data(path.display(), e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let f = File::open(path).map_err(|e| CliError::data(path.display(), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CliError::data(path.display(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CliError::data(format!("{}:{}", path.display(), i + 1), e))?);
    }
    Ok(out)
}

fn pool(cfg: &PipelineConfig) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("worker pool: {e}")))
}

/// One input line: a source record, or an AST record when `nodes` is present.
fn parse_input(line: &str, line_no: usize) -> Result<Input, Reject> {
    let value: serde_json::Value = serde_json::from_str(line)
        .map_err(|e| Reject::new(&format!("line-{line_no}"), 1, RejectReason::Schema, e))?;
    let id = value
        .get("id")
        .and_then(|v| v.as_str())
        .map_or_else(|| format!("line-{line_no}"), str::to_string);
    let schema = |e: serde_json::Error| Reject::new(&id, 1, RejectReason::Schema, e);
    if value.get("nodes").is_some() {
        serde_json::from_value(value.clone()).map(Input::Ast).map_err(schema)
    } else {
        serde_json::from_value(value.clone()).map(Input::Source).map_err(schema)
    }
}

fn read_inputs(path: &Path) -> Result<Vec<Result<Input, Reject>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data(path.display(), e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_input(l, i + 1))
        .collect())
}

fn stage1_one(cfg: &PipelineConfig, input: Result<Input, Reject>, max_tokens: usize) -> Result<Stage1Record, Reject> {
    let (id, lang) = match &input {
        Ok(Input::Source(s)) => (s.id.clone(), Some(s.language)),
        Ok(Input::Ast(a)) => (a.id.clone(), a.language.parse::<Language>().ok()),
        Err(_) => (String::new(), None),
    };
    if let Some(lang) = lang {
        if cfg.language_id(lang).is_none() {
            return Err(Reject::new(&id, 1, RejectReason::Schema, format!("language {lang} not selected")));
        }
    }
    match input? {
        Input::Source(s) => stage1_from_source(&s, max_tokens),
        Input::Ast(a) => stage1_from_ast_record(&a, max_tokens),
    }
}

/// Stage 1 for every split with a configured input file.
pub fn preprocess_stage1(cfg: &PipelineConfig) -> Result<Vec<SplitCounts>, CliError> {
    let pool = pool(cfg)?;
    let mut summary = Vec::new();
    let mut any = false;
    for split in Split::ALL {
        let Some(input) = cfg.split_input(split) else { continue };
        any = true;
        let inputs = read_inputs(input)?;
        let max_tokens = cfg.max_tokens(split);
        let results: Vec<Result<Stage1Record, Reject>> = pool.install(|| {
            use rayon::prelude::*;
            inputs
                .into_par_iter()
                .map(|i| stage1_one(cfg, i, max_tokens))
                .collect()
        });
        let (ok, rejects): (Vec<_>, Vec<_>) = results.into_iter().partition(Result::is_ok);
        let ok: Vec<Stage1Record> = ok.into_iter().map(Result::unwrap).collect();
        let rejects: Vec<Reject> = rejects.into_iter().map(Result::unwrap_err).collect();
        for r in &rejects {
            log::warn!("{} rejected in stage 1 ({}): {}", r.id, r.reason, r.detail);
        }
        write_jsonl(&stage1_path(cfg, split), &ok)?;
        write_jsonl(&stage1_rejects_path(cfg, split), &rejects)?;
        summary.push(SplitCounts {
            split: split.name().into(),
            accepted: ok.len(),
            rejected: rejects.len(),
        });
    }
    if !any {
        return Err(CliError::Usage("no input files configured under [paths]".into()));
    }
    Ok(summary)
}

fn subtoken_corpus(records: &[Stage1Record]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| {
            r.tokens
                .iter()
                .flat_map(|t| t.subtokens.iter().cloned())
                .chain(r.label.iter().cloned())
                .collect()
        })
        .collect()
}

/// Per-language subtoken vocabularies from the training split, their union,
/// and the node-type vocabulary.
pub fn build_vocabularies(cfg: &PipelineConfig) -> Result<(Vocabulary, Vocabulary), CliError> {
    let records: Vec<Stage1Record> = read_jsonl(&stage1_path(cfg, Split::Train))?;
    let mut per_language = Vec::new();
    for &lang in &cfg.languages {
        let subset: Vec<Stage1Record> = records.iter().filter(|r| r.language == lang).cloned().collect();
        let v = build_vocab(subtoken_corpus(&subset), cfg.preprocess.min_count);
        let path = cfg.paths.out.join("vocab").join(format!("subtokens.{lang}.txt"));
        create(&path)?
            .write_all(v.to_text().as_bytes())
            .map_err(|e| CliError::data(path.display(), e))?;
        per_language.push(v);
    }
    let union = Vocabulary::union(&per_language).map_err(|e| CliError::data("vocabulary union", e))?;
    let nodes = Vocabulary::build(
        records.iter().map(|r| r.nodes.iter().map(|n| n.node_type.clone()).collect::<Vec<_>>()),
        1,
        &NODE_TYPE_SPECIALS,
    );
    for (path, v) in [(vocab_path(cfg), &union), (node_vocab_path(cfg), &nodes)] {
        create(&path)?
            .write_all(v.to_text().as_bytes())
            .map_err(|e| CliError::data(path.display(), e))?;
    }
    Ok((union, nodes))
}

pub struct Vocabs {
    pub subtokens: Vocabulary,
    pub nodes: Vocabulary,
    pub hash: String,
}

pub fn load_vocabs(cfg: &PipelineConfig) -> Result<Vocabs, CliError> {
    let read = |p: PathBuf| -> Result<Vocabulary, CliError> {
        let text = fs::read_to_string(&p).map_err(|e| CliError::data(p.display(), e))?;
        Vocabulary::from_text(&text).map_err(|e| CliError::data(p.display(), e))
    };
    let subtokens = read(vocab_path(cfg))?;
    let nodes = read(node_vocab_path(cfg))?;
    let hash = vocab_hash(&subtokens, &nodes);
    Ok(Vocabs { subtokens, nodes, hash })
}

/// Stage 2 for every split that went through stage 1.
pub fn preprocess_stage2(cfg: &PipelineConfig) -> Result<Vec<SplitCounts>, CliError> {
    let vocabs = load_vocabs(cfg)?;
    let pool = pool(cfg)?;
    let opts = Stage2Options {
        k: cfg.preprocess.k,
        growth: cfg.preprocess.growth,
        alpha: cfg.preprocess.alpha,
    };
    let mut summary = Vec::new();
    for split in Split::ALL {
        let path = stage1_path(cfg, split);
        if cfg.split_input(split).is_none() && !path.exists() {
            continue;
        }
        let records: Vec<Stage1Record> = read_jsonl(&path)?;
        let results: Vec<Result<Snippet, Reject>> = pool.install(|| {
            use rayon::prelude::*;
            records
                .par_iter()
                .map(|r| {
                    let lang = cfg.language_id(r.language).ok_or_else(|| {
                        Reject::new(&r.id, 2, RejectReason::Schema, format!("language {} not selected", r.language))
                    })?;
                    Snippet::from_stage1(r, &vocabs.subtokens, &vocabs.nodes, lang, opts)
                })
                .collect()
        });
        let mut by_lang: Vec<Vec<Snippet>> = vec![Vec::new(); cfg.languages.len()];
        let mut rejects = Vec::new();
        for r in results {
            match r {
                Ok(s) => by_lang[s.language as usize].push(s),
                Err(rej) => {
                    log::warn!("{} rejected in stage 2: {}", rej.id, rej.detail);
                    rejects.push(rej);
                }
            }
        }
        let header = ShardHeader {
            vocab_hash: vocabs.hash.clone(),
            k: cfg.preprocess.k,
        };
        let mut accepted = 0;
        for (lang, snippets) in cfg.languages.iter().zip(&by_lang) {
            let p = shard_path(cfg, split, *lang);
            if let Some(dir) = p.parent() {
                fs::create_dir_all(dir).map_err(|e| CliError::data(dir.display(), e))?;
            }
            write_shard_file(&p, &header, snippets).map_err(|e| CliError::data(p.display(), e))?;
            accepted += snippets.len();
        }
        write_jsonl(&stage2_rejects_path(cfg, split), &rejects)?;
        summary.push(SplitCounts {
            split: split.name().into(),
            accepted,
            rejected: rejects.len(),
        });
    }
    Ok(summary)
}

/// Shards of one split, one pool per configured language. `None` when the
/// split was never preprocessed.
pub fn load_split(cfg: &PipelineConfig, split: Split, vocabs: &Vocabs) -> Result<Option<Vec<Vec<Snippet>>>, CliError> {
    let paths: Vec<PathBuf> = cfg.languages.iter().map(|&l| shard_path(cfg, split, l)).collect();
    if !paths.iter().any(|p| p.exists()) {
        return Ok(None);
    }
    let mut pools = Vec::new();
    for p in paths {
        if !p.exists() {
            pools.push(Vec::new());
            continue;
        }
        let (header, snippets) = read_shard_file(&p).map_err(|e| CliError::data(p.display(), e))?;
        if header.vocab_hash != vocabs.hash {
            return Err(CliError::Data(format!(
                "{} was built with vocabulary {}, current vocabulary is {}",
                p.display(),
                header.vocab_hash,
                vocabs.hash
            )));
        }
        if header.k != cfg.preprocess.k {
            return Err(CliError::Data(format!(
                "{} uses {} bins, config asks for {}",
                p.display(),
                header.k,
                cfg.preprocess.k
            )));
        }
        pools.push(snippets);
    }
    Ok(Some(pools))
}

fn model_error(e: ModelError) -> CliError {
    match e {
        ModelError::NonFinite(_) => CliError::Numeric(e.to_string()),
        ModelError::Config(_) => CliError::Usage(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::Model(m) => model_error(m),
        TrainError::NonFiniteParams { .. } => CliError::Numeric(e.to_string()),
        TrainError::Config(m) => CliError::Usage(m),
        TrainError::Empty | TrainError::Callback(_) => CliError::Data(e.to_string()),
    }
}

/// Trains on the training shards, validating on the validation shards when
/// present. Writes `train/log.jsonl`, periodic checkpoints and `model.ckpt`.
pub fn train(cfg: &PipelineConfig) -> Result<TrainSummary, CliError> {
    let vocabs = load_vocabs(cfg)?;
    let pools = load_split(cfg, Split::Train, &vocabs)?
        .ok_or_else(|| CliError::Data("training shards missing; run preprocess first".into()))?;
    let valid: Vec<Snippet> = load_split(cfg, Split::Valid, &vocabs)?
        .unwrap_or_default()
        .into_iter()
        .flatten()
        .collect();
    let mc = cfg.model_config(vocabs.subtokens.len(), vocabs.nodes.len())?;
    let tc = cfg.train_config();
    let model = Model::new(mc, cfg.seed).map_err(model_error)?;
    log::info!(
        "training {} parameters on {} snippets",
        model.params.n_scalars(),
        pools.iter().map(Vec::len).sum::<usize>()
    );

    let train_dir = cfg.paths.out.join("train");
    let log_path = train_dir.join("log.jsonl");
    let mut log = create(&log_path)?;
    let eval_every = tc.eval_every as u64;
    let mut trainer = Trainer::new(model, tc);
    let pool_refs: Vec<&[Snippet]> = pools.iter().map(Vec::as_slice).collect();
    let mut last_loss = f64::NAN;
    let on_log = |model: &Model, entry: &LogEntry| -> Result<(), String> {
        last_loss = entry.loss;
        let line = serde_json::to_string(entry).map_err(|e| e.to_string())?;
        writeln!(log, "{line}").map_err(|e| e.to_string())?;
        if eval_every > 0 && entry.step % eval_every == 0 {
            let p = train_dir.join(format!("step-{}.ckpt", entry.step));
            checkpoint::save(&p, model, &vocabs.hash, entry.step).map_err(|e| e.to_string())?;
        }
        Ok(())
    };
    let (report, tuned) = train_multilingual(&mut trainer, &pool_refs, &valid, &vocabs.subtokens, on_log).map_err(train_error)?;
    log.flush().map_err(|e| CliError::data(log_path.display(), e))?;

    let ckpt = cfg.checkpoint_path();
    if let Some(dir) = ckpt.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::data(dir.display(), e))?;
    }
    checkpoint::save(&ckpt, &trainer.model, &vocabs.hash, report.steps).map_err(|e| CliError::data(ckpt.display(), e))?;
    for (lang, m) in cfg.languages.iter().zip(&tuned) {
        let p = cfg.paths.out.join(format!("model.{lang}.ckpt"));
        checkpoint::save(&p, m, &vocabs.hash, report.steps).map_err(|e| CliError::data(p.display(), e))?;
    }
    Ok(TrainSummary {
        steps: report.steps,
        final_loss: report.log.last().map_or(last_loss, |e| e.loss),
        best_f1: report.best_f1,
    })
}

/// Loads the configured checkpoint and checks it against vocabularies and bins.
pub fn load_model(cfg: &PipelineConfig, vocabs: &Vocabs) -> Result<Model, CliError> {
    let path = cfg.checkpoint_path();
    let ck = checkpoint::load(&path, Some(&vocabs.hash)).map_err(|e| CliError::data(path.display(), e))?;
    let c = &ck.model.config;
    if c.subtoken_vocab != vocabs.subtokens.len() || c.node_vocab != vocabs.nodes.len() || c.k != cfg.preprocess.k {
        return Err(CliError::Data(format!("{} does not match the vocabulary or bin count", path.display())));
    }
    Ok(ck.model)
}

/// The requested split, or the first of test, valid, train that exists.
fn pick_split(cfg: &PipelineConfig, split: Option<Split>, vocabs: &Vocabs) -> Result<(Split, Vec<Snippet>), CliError> {
    let order = match split {
        Some(s) => vec![s],
        None => vec![Split::Test, Split::Valid, Split::Train],
    };
    for s in order {
        if let Some(pools) = load_split(cfg, s, vocabs)? {
            return Ok((s, pools.into_iter().flatten().collect()));
        }
    }
    Err(CliError::Data("no preprocessed split to work on".into()))
}

fn predictions(cfg: &PipelineConfig, split: Option<Split>) -> Result<(Split, Vec<PredictionRecord>), CliError> {
    let vocabs = load_vocabs(cfg)?;
    let model = load_model(cfg, &vocabs)?;
    let (split, snippets) = pick_split(cfg, split, &vocabs)?;
    let pool = pool(cfg)?;
    let names = pool
        .install(|| predict_names(&model, &snippets, &vocabs.subtokens))
        .map_err(model_error)?;
    let records = snippets
        .iter()
        .zip(names)
        .map(|(s, predicted)| PredictionRecord {
            id: s.id.clone(),
            predicted,
            reference: s.label_text.clone(),
        })
        .collect();
    Ok((split, records))
}

/// Writes `predict/<split>.predictions.jsonl`.
pub fn predict(cfg: &PipelineConfig, split: Option<Split>) -> Result<PathBuf, CliError> {
    let (split, records) = predictions(cfg, split)?;
    let path = cfg.paths.out.join("predict").join(format!("{}.predictions.jsonl", split.name()));
    write_jsonl(&path, &records)?;
    Ok(path)
}

/// Predicts, then scores against the references. Writes predictions and
/// `eval/<split>.score.json`.
pub fn evaluate(cfg: &PipelineConfig, split: Option<Split>, mode: MatchMode) -> Result<ScoreReport, CliError> {
    let (split, records) = predictions(cfg, split)?;
    let dir = cfg.paths.out.join("eval");
    write_jsonl(&dir.join(format!("{}.predictions.jsonl", split.name())), &records)?;
    let report = score_records(&records, mode);
    let path = dir.join(format!("{}.score.json", split.name()));
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::data(path.display(), e))?;
    create(&path)?
        .write_all(json.as_bytes())
        .map_err(|e| CliError::data(path.display(), e))?;
    Ok(report)
}

pub fn score_records(records: &[PredictionRecord], mode: MatchMode) -> ScoreReport {
    let p: Vec<&[String]> = records.iter().map(|r| r.predicted.as_slice()).collect();
    let r: Vec<&[String]> = records.iter().map(|r| r.reference.as_slice()).collect();
    score(&p, &r, mode).expect("one prediction per reference")
}

/// Scores an existing prediction file.
pub fn score_file(path: &Path, mode: MatchMode) -> Result<ScoreReport, CliError> {
    let records: Vec<PredictionRecord> = read_jsonl(path)?;
    Ok(score_records(&records, mode))
}

/// Writes the encoder output at the masked name of every snippet to
/// `embed/<split>.embeddings.jsonl`.
pub fn embed(cfg: &PipelineConfig, split: Option<Split>) -> Result<PathBuf, CliError> {
    let vocabs = load_vocabs(cfg)?;
    let model = load_model(cfg, &vocabs)?;
    let (split, snippets) = pick_split(cfg, split, &vocabs)?;
    let pool = pool(cfg)?;
    let rows: Result<Vec<EmbeddingRecord>, ModelError> = pool.install(|| {
        use rayon::prelude::*;
        snippets
            .par_iter()
            .map(|s| {
                Ok(EmbeddingRecord {
                    id: s.id.clone(),
                    embedding: model.embed(s)?,
                })
            })
            .collect()
    });
    let path = cfg.paths.out.join("embed").join(format!("{}.embeddings.jsonl", split.name()));
    write_jsonl(&path, &rows.map_err(model_error)?)?;
    Ok(path)
}

/// Writes the bundled demo corpus as source JSONL.
pub fn write_demo_corpus(path: &Path) -> Result<usize, CliError> {
    let corpus = crate::demo::demo_corpus();
    write_jsonl(path, &corpus)?;
    Ok(corpus.len())
}
