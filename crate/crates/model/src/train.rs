//! Gradient accumulation, the optimizer loop and multilingual sampling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ct_core::corpus::Vocabulary;
use ct_core::metrics::{micro_f1, MatchMode};
use ct_core::shard::Snippet;

use crate::config::TrainConfig;
use crate::model::{Mode, Model, ModelError};
use crate::optim::AdamW;
use crate::tape::Grads;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub micro_f1_val: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no training snippets")]
    Empty,
    #[error("{0}")]
    Config(String),
    #[error("step {step}: parameters became non-finite")]
    NonFiniteParams { step: u64 },
    #[error("callback failed: {0}")]
    Callback(String),
}

/// Derives an independent stream per `(seed, step, example)`.
fn dropout_seed(seed: u64, step: u64, example: u64) -> u64 {
    let mut z = seed
        ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ example.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Summed loss and gradients over `batch`. Examples are evaluated in parallel
/// and reduced in input order, so the result does not depend on thread count.
pub fn batch_gradients(
    model: &Model,
    batch: &[&Snippet],
    smoothing: f64,
    seed: u64,
    step: u64,
    first_example: u64,
) -> Result<(f64, Grads), ModelError> {
    let p = model.config.dropout;
    let results: Vec<Result<(f64, Grads), ModelError>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut mode = if p > 0.0 {
                Mode::train(p, dropout_seed(seed, step, first_example + i as u64))
            } else {
                Mode::Eval
            };
            model.loss_and_grads(s, smoothing, &mut mode)
        })
        .collect();
    let mut total = Grads::zeros_like(&model.params);
    let mut loss = 0.0;
    for r in results {
        let (l, g) = r?;
        loss += l;
        total.add_assign(&g);
    }
    Ok((loss, total))
}

/// Model plus optimizer state.
pub struct Trainer {
    pub model: Model,
    pub opt: AdamW,
    pub config: TrainConfig,
    pub step: u64,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Self {
        let opt = AdamW::new(
            &model.params,
            config.lr,
            config.beta1,
            config.beta2,
            config.eps,
            config.weight_decay,
        );
        Self {
            model,
            opt,
            config,
            step: 0,
        }
    }

    /// One optimizer update from the mean gradient over all micro-batches.
    /// Returns the mean loss.
    pub fn train_step(&mut self, micro_batches: &[Vec<&Snippet>]) -> Result<f64, TrainError> {
        let mut grads = Grads::zeros_like(&self.model.params);
        let mut loss = 0.0;
        let mut count = 0u64;
        for mb in micro_batches {
            let (l, g) = batch_gradients(
                &self.model,
                mb,
                self.config.label_smoothing,
                self.config.seed,
                self.step,
                count,
            )?;
            loss += l;
            grads.add_assign(&g);
            count += mb.len() as u64;
        }
        if count == 0 {
            return Err(TrainError::Empty);
        }
        grads.scale(1.0 / count as f64);
        let mean = loss / count as f64;
        if !mean.is_finite() || !grads.all_finite() {
            return Err(ModelError::NonFinite(mean).into());
        }
        self.opt.update(&mut self.model.params, &grads);
        self.step += 1;
        if !self.model.params.all_finite() {
            return Err(TrainError::NonFiniteParams { step: self.step });
        }
        Ok(mean)
    }
}

/// Endless shuffled passes over the union of all pools, so each language is
/// drawn in proportion to its size.
pub struct Sampler<'a> {
    items: Vec<&'a Snippet>,
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl<'a> Sampler<'a> {
    pub fn new(pools: &[&'a [Snippet]], seed: u64) -> Self {
        let items: Vec<&Snippet> = pools.iter().flat_map(|p| p.iter()).collect();
        let order = (0..items.len()).collect();
        let mut s = Self {
            items,
            order,
            pos: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        s.order.shuffle(&mut s.rng);
        s
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<&'a Snippet> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size && !self.items.is_empty() {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.items[self.order[self.pos]]);
            self.pos += 1;
        }
        out
    }
}

/// Greedy predictions as strings, in input order.
pub fn predict_names(model: &Model, snippets: &[Snippet], vocab: &Vocabulary) -> Result<Vec<Vec<String>>, ModelError> {
    snippets
        .par_iter()
        .map(|s| {
            let ids = model.predict(s)?;
            Ok(ids
                .iter()
                .map(|&id| s.output_token(vocab, id).unwrap_or(ct_core::corpus::vocab::UNK).to_string())
                .collect())
        })
        .collect()
}

pub fn evaluate_f1(model: &Model, snippets: &[Snippet], vocab: &Vocabulary) -> Result<f64, ModelError> {
    let predicted = predict_names(model, snippets, vocab)?;
    let reference: Vec<&[String]> = snippets.iter().map(|s| s.label_text.as_slice()).collect();
    Ok(micro_f1(&predicted, &reference, MatchMode::Multiset).expect("one prediction per snippet"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub log: Vec<LogEntry>,
    pub steps: u64,
    pub best_f1: Option<f64>,
}

/// Runs `config.max_steps` updates, or fewer if validation F1 reaches
/// `config.target_f1` or stops improving for `config.patience` evaluations. `on_log` sees every entry
/// and may write checkpoints.
pub fn train<F>(
    trainer: &mut Trainer,
    pools: &[&[Snippet]],
    valid: &[Snippet],
    vocab: &Vocabulary,
    mut on_log: F,
) -> Result<TrainReport, TrainError>
where
    F: FnMut(&Model, &LogEntry) -> Result<(), String>,
{
    trainer
        .config
        .validate()
        .map_err(|e| TrainError::Config(e.to_string()))?;
    let mut sampler = Sampler::new(pools, trainer.config.seed);
    if sampler.is_empty() {
        return Err(TrainError::Empty);
    }
    let cfg = trainer.config.clone();
    let mut log = Vec::new();
    let mut best: Option<f64> = None;
    let mut stale = 0;
    for _ in 0..cfg.max_steps {
        let micro: Vec<Vec<&Snippet>> = (0..cfg.accumulation).map(|_| sampler.next_batch(cfg.batch)).collect();
        let loss = trainer.train_step(&micro)?;
        let step = trainer.step;
        let eval_now = cfg.eval_every > 0 && step % cfg.eval_every as u64 == 0;
        let f1 = if eval_now && !valid.is_empty() {
            Some(evaluate_f1(&trainer.model, valid, vocab)?)
        } else {
            None
        };
        let entry = LogEntry {
            step,
            loss,
            lr: cfg.lr,
            micro_f1_val: f1,
        };
        log::debug!("step {step} loss {loss:.5}");
        on_log(&trainer.model, &entry).map_err(TrainError::Callback)?;
        log.push(entry);
        if let (Some(f), Some(target)) = (f1, cfg.target_f1) {
            if f >= target {
                best = Some(best.map_or(f, |b: f64| b.max(f)));
                log::info!("validation F1 {f:.4} reached the target at step {step}");
                break;
            }
        }
        if let Some(f) = f1 {
            if best.is_none_or(|b| f > b) {
                best = Some(f);
                stale = 0;
            } else {
                stale += 1;
                if cfg.patience > 0 && stale >= cfg.patience {
                    log::info!("validation F1 plateaued at step {step}");
                    break;
                }
            }
        }
    }
    Ok(TrainReport {
        steps: trainer.step,
        log,
        best_f1: best,
    })
}

/// Joint training over all languages, then optionally a per-language
/// fine-tuning copy of the joint model for each pool.
pub fn train_multilingual<F>(
    trainer: &mut Trainer,
    pools: &[&[Snippet]],
    valid: &[Snippet],
    vocab: &Vocabulary,
    mut on_log: F,
) -> Result<(TrainReport, Vec<Model>), TrainError>
where
    F: FnMut(&Model, &LogEntry) -> Result<(), String>,
{
    let joint = train(trainer, pools, valid, vocab, &mut on_log)?;
    let mut tuned = Vec::new();
    if trainer.config.finetune_steps > 0 {
        for (lang, pool) in pools.iter().enumerate() {
            let mut cfg = trainer.config.clone();
            cfg.max_steps = cfg.finetune_steps;
            cfg.seed = cfg.seed.wrapping_add(lang as u64 + 1);
            cfg.patience = 0;
            let mut ft = Trainer::new(trainer.model.clone(), cfg);
            let lang_valid: Vec<Snippet> = valid.iter().filter(|s| s.language as usize == lang).cloned().collect();
            train(&mut ft, &[pool], &lang_valid, vocab, &mut on_log)?;
            tuned.push(ft.model);
        }
    }
    Ok((joint, tuned))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dropout_seeds_differ() {
        let a = dropout_seed(1, 2, 3);
        assert_ne!(a, dropout_seed(1, 2, 4));
        assert_ne!(a, dropout_seed(1, 3, 3));
        assert_ne!(a, dropout_seed(2, 2, 3));
        assert_eq!(a, dropout_seed(1, 2, 3));
    }
}
