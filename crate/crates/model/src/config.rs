use serde::{Deserialize, Serialize};

use ct_core::corpus::TokenKind;
use ct_core::relations::Relation;

/// Wavelength base of the sinusoidal distance encoding.
pub const ENCODING_BASE: f64 = 10_000.0;
/// Decoder steps: up to six name subtokens, or fewer plus end-of-name.
pub const MAX_OUTPUT_SUBTOKENS: usize = 6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("model dimension {d} is not divisible by {heads} heads")]
    HeadSplit { d: usize, heads: usize },
    #[error("model dimension {0} must be even for the sinusoidal encoding")]
    OddDimension(usize),
    #[error("at least one of use_structure and use_context must be set")]
    NoInput,
    #[error("{0} must be positive")]
    Zero(&'static str),
    #[error("dropout {0} outside [0, 1)")]
    Dropout(f64),
    #[error("unknown preset {0:?} (expected \"full\" or \"desk\")")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d: usize,
    pub d_ff: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub dropout: f64,
    /// Bins per relation.
    pub k: usize,
    pub d_sub: usize,
    pub d_kind: usize,
    pub d_node: usize,
    pub subtoken_vocab: usize,
    pub node_vocab: usize,
    pub n_languages: usize,
    pub use_pointer: bool,
    pub use_structure: bool,
    pub use_context: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// The published hyperparameters. Vocabulary sizes are filled in later.
    pub fn full() -> Self {
        Self {
            d: 1024,
            d_ff: 2048,
            n_layers: 3,
            n_heads: 8,
            dropout: 0.2,
            k: 32,
            d_sub: 256,
            d_kind: 64,
            d_node: 128,
            subtoken_vocab: 0,
            node_vocab: 0,
            n_languages: 1,
            use_pointer: true,
            use_structure: true,
            use_context: true,
        }
    }

    /// Small enough to train on a laptop CPU in minutes.
    pub fn desk() -> Self {
        Self {
            d: 128,
            d_ff: 256,
            n_layers: 3,
            n_heads: 8,
            dropout: 0.0,
            k: 16,
            d_sub: 32,
            d_kind: 8,
            d_node: 16,
            ..Self::full()
        }
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name {
            "full" => Ok(Self::full()),
            "desk" => Ok(Self::desk()),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    pub fn d_k(&self) -> usize {
        self.d / self.n_heads
    }

    pub fn n_kinds(&self) -> usize {
        TokenKind::COUNT
    }

    /// Relations fed to the attention under the ablation flags.
    pub fn active_relations(&self) -> Vec<Relation> {
        Relation::ALL
            .into_iter()
            .filter(|r| match r {
                Relation::Sequence => self.use_context,
                _ => self.use_structure,
            })
            .collect()
    }

    /// Width of the concatenated per-token input before projection.
    pub fn input_width(&self) -> usize {
        let mut w = ct_core::corpus::SUBTOKEN_SLOTS * self.d_sub;
        if self.use_context {
            w += self.d_kind;
        }
        if self.use_structure {
            w += self.d_node;
        }
        w
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("d", self.d),
            ("d_ff", self.d_ff),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("k", self.k),
            ("d_sub", self.d_sub),
            ("subtoken_vocab", self.subtoken_vocab),
            ("n_languages", self.n_languages),
        ] {
            if v == 0 {
                return Err(ConfigError::Zero(name));
            }
        }
        if self.d % self.n_heads != 0 {
            return Err(ConfigError::HeadSplit {
                d: self.d,
                heads: self.n_heads,
            });
        }
        if self.d % 2 != 0 {
            return Err(ConfigError::OddDimension(self.d));
        }
        if !self.use_structure && !self.use_context {
            return Err(ConfigError::NoInput);
        }
        if self.use_structure && (self.node_vocab == 0 || self.d_node == 0) {
            return Err(ConfigError::Zero("node_vocab"));
        }
        if self.use_context && self.d_kind == 0 {
            return Err(ConfigError::Zero("d_kind"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ConfigError::Dropout(self.dropout));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch: usize,
    pub accumulation: usize,
    pub label_smoothing: f64,
    pub max_steps: usize,
    pub seed: u64,
    pub eval_every: usize,
    /// Evaluations without validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Extra per-language steps after joint training.
    pub finetune_steps: usize,
    /// Stop as soon as validation micro-F1 reaches this value.
    pub target_f1: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 8e-5,
            weight_decay: 3e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch: 8,
            accumulation: 16,
            label_smoothing: 0.1,
            max_steps: 10_000,
            seed: 0,
            eval_every: 500,
            patience: 0,
            finetune_steps: 0,
            target_f1: None,
        }
    }
}

impl TrainConfig {
    pub fn effective_batch(&self) -> usize {
        self.batch * self.accumulation
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.lr.is_nan() || self.lr < 0.0 {
            return Err(ConfigError::Zero("lr"));
        }
        if self.batch == 0 {
            return Err(ConfigError::Zero("batch"));
        }
        if self.accumulation == 0 {
            return Err(ConfigError::Zero("accumulation"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sized(mut c: ModelConfig) -> ModelConfig {
        c.subtoken_vocab = 50;
        c.node_vocab = 10;
        c
    }

    #[test]
    fn presets_validate() {
        sized(ModelConfig::full()).validate().unwrap();
        sized(ModelConfig::desk()).validate().unwrap();
        assert_eq!(ModelConfig::full().d_k(), 128);
        assert_eq!(ModelConfig::desk().d_k(), 16);
    }

    #[test]
    fn rejects_bad_head_split_and_no_input() {
        let mut c = sized(ModelConfig::desk());
        c.n_heads = 3;
        assert!(matches!(c.validate(), Err(ConfigError::HeadSplit { .. })));
        let mut c = sized(ModelConfig::desk());
        c.use_structure = false;
        c.use_context = false;
        assert_eq!(c.validate(), Err(ConfigError::NoInput));
    }

    #[test]
    fn ablations_select_relations() {
        let mut c = ModelConfig::desk();
        assert_eq!(c.active_relations().len(), 5);
        c.use_context = false;
        assert_eq!(c.active_relations(), Relation::STRUCTURAL.to_vec());
        c.use_context = true;
        c.use_structure = false;
        assert_eq!(c.active_relations(), vec![Relation::Sequence]);
    }

    #[test]
    fn effective_batch() {
        assert_eq!(TrainConfig::default().effective_batch(), 128);
    }
}
