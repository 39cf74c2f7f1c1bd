//! Command-line pipeline: preprocessing, vocabulary, training, evaluation,
//! prediction and embedding export.

pub mod commands;
pub mod config;
pub mod demo;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use ct_core::corpus::Language;
use ct_core::metrics::MatchMode;

use crate::config::{Overrides, PipelineConfig, Split};
pub use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "code-transformer", version, about = "Method name prediction from code structure and context")]
pub struct Cli {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Restrict to one language.
    #[arg(long, global = true)]
    pub lang: Option<Language>,
    /// Worker threads for preprocessing and inference.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Checkpoint to read (evaluate, predict, embed) or write (train).
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Matching {
    Multiset,
    Set,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stage 1 (tokens, AST, assignment) or stage 2 (binned shards).
    Preprocess {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
    },
    /// Builds subtoken and node-type vocabularies from the stage-1 training split.
    Vocab,
    Train,
    /// Predicts and scores a split, or scores an existing prediction file.
    Evaluate {
        #[arg(long, value_enum)]
        split: Option<Split>,
        #[arg(long, value_enum, default_value = "multiset")]
        matching: Matching,
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    Predict {
        #[arg(long, value_enum)]
        split: Option<Split>,
    },
    /// Exports the encoder output at the masked name for every snippet.
    Embed {
        #[arg(long, value_enum)]
        split: Option<Split>,
    },
    /// Writes the 100-snippet demo corpus to `<out>/demo.jsonl`.
    DemoCorpus,
    /// Preprocess, vocabulary, train and evaluate in one go.
    Pipeline,
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("summaries serialize"));
}

pub fn resolve_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        workers: cli.workers,
        lang: cli.lang,
        checkpoint: cli.checkpoint.clone(),
        out: cli.out.clone(),
    });
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli)?;
    match cli.command {
        Command::Preprocess { stage: 1 } => print_json(&commands::preprocess_stage1(&cfg)?),
        Command::Preprocess { .. } => print_json(&commands::preprocess_stage2(&cfg)?),
        Command::Vocab => {
            let (v, n) = commands::build_vocabularies(&cfg)?;
            print_json(&serde_json::json!({ "subtokens": v.len(), "node_types": n.len() }));
        }
        Command::Train => print_json(&commands::train(&cfg)?),
        Command::Evaluate {
            split,
            matching,
            predictions,
        } => {
            let mode = match matching {
                Matching::Multiset => MatchMode::Multiset,
                Matching::Set => MatchMode::Set,
            };
            let report = match predictions {
                Some(p) => commands::score_file(&p, mode)?,
                None => commands::evaluate(&cfg, split, mode)?,
            };
            print_json(&report);
        }
        Command::Predict { split } => println!("{}", commands::predict(&cfg, split)?.display()),
        Command::Embed { split } => println!("{}", commands::embed(&cfg, split)?.display()),
        Command::DemoCorpus => {
            let path = cfg.paths.out.join("demo.jsonl");
            let n = commands::write_demo_corpus(&path)?;
            println!("{n} snippets written to {}", path.display());
        }
        Command::Pipeline => {
            print_json(&commands::preprocess_stage1(&cfg)?);
            commands::build_vocabularies(&cfg)?;
            print_json(&commands::preprocess_stage2(&cfg)?);
            print_json(&commands::train(&cfg)?);
            print_json(&commands::evaluate(&cfg, None, MatchMode::Multiset)?);
        }
    }
    Ok(())
}
