//! Pipeline configuration: TOML file with command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ct_core::corpus::Language;
use ct_core::relations::{DEFAULT_ALPHA, DEFAULT_BINS, DEFAULT_GROWTH, MIN_BINS};
use ct_core::snippet::{MAX_TOKENS_EVAL, MAX_TOKENS_TRAIN};
use ct_model::{ModelConfig, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// JSONL inputs per split; each line a source or AST record.
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Working directory for every artifact.
    pub out: PathBuf,
    /// Checkpoint for evaluate/predict/embed; defaults to `out/model.ckpt`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            train: None,
            valid: None,
            test: None,
            out: PathBuf::from("work"),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Preprocess {
    pub max_tokens_train: usize,
    pub max_tokens_eval: usize,
    pub k: usize,
    pub growth: f64,
    pub alpha: f64,
    pub min_count: u64,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            max_tokens_train: MAX_TOKENS_TRAIN,
            max_tokens_eval: MAX_TOKENS_EVAL,
            k: DEFAULT_BINS,
            growth: DEFAULT_GROWTH,
            alpha: DEFAULT_ALPHA,
            min_count: 1,
        }
    }
}

/// Preset name plus optional overrides of individual fields.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub preset: Option<String>,
    pub d: Option<usize>,
    pub d_ff: Option<usize>,
    pub n_layers: Option<usize>,
    pub n_heads: Option<usize>,
    pub dropout: Option<f64>,
    pub d_sub: Option<usize>,
    pub d_kind: Option<usize>,
    pub d_node: Option<usize>,
    pub use_pointer: Option<bool>,
    pub use_structure: Option<bool>,
    pub use_context: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub workers: usize,
    pub languages: Vec<Language>,
    pub paths: Paths,
    pub preprocess: Preprocess,
    pub model: ModelSection,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            languages: vec![Language::Mini],
            paths: Paths::default(),
            preprocess: Preprocess::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Values given on the command line win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub lang: Option<Language>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::data(path.display(), e))?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(l) = o.lang {
            self.languages = vec![l];
        }
        if let Some(c) = &o.checkpoint {
            self.paths.checkpoint = Some(c.clone());
        }
        if let Some(out) = &o.out {
            self.paths.out = out.clone();
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.workers == 0 {
            return Err(CliError::Usage("workers must be at least 1".into()));
        }
        if self.languages.is_empty() {
            return Err(CliError::Usage("no languages configured".into()));
        }
        let mut seen = self.languages.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.languages.len() {
            return Err(CliError::Usage("languages listed twice".into()));
        }
        if self.preprocess.k < MIN_BINS {
            return Err(CliError::Usage(format!("k must be at least {MIN_BINS}")));
        }
        self.model_config(1, 1).map(|_| ())?;
        self.train_config().validate().map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Resolves preset and overrides; vocabulary sizes come from the data.
    pub fn model_config(&self, subtoken_vocab: usize, node_vocab: usize) -> Result<ModelConfig, CliError> {
        let m = &self.model;
        let mut c = ModelConfig::preset(m.preset.as_deref().unwrap_or("desk")).map_err(|e| CliError::Usage(e.to_string()))?;
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = m.$f { c.$f = v; } )* };
        }
        set!(d, d_ff, n_layers, n_heads, dropout, d_sub, d_kind, d_node, use_pointer, use_structure, use_context);
        c.k = self.preprocess.k;
        c.subtoken_vocab = subtoken_vocab;
        c.node_vocab = node_vocab;
        c.n_languages = self.languages.len();
        c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(c)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn language_id(&self, lang: Language) -> Option<u16> {
        self.languages.iter().position(|&l| l == lang).map(|i| i as u16)
    }

    pub fn split_input(&self, split: Split) -> Option<&Path> {
        match split {
            Split::Train => self.paths.train.as_deref(),
            Split::Valid => self.paths.valid.as_deref(),
            Split::Test => self.paths.test.as_deref(),
        }
    }

    pub fn max_tokens(&self, split: Split) -> usize {
        match split {
            Split::Train => self.preprocess.max_tokens_train,
            _ => self.preprocess.max_tokens_eval,
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.paths
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.paths.out.join("model.ckpt"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}
