//! Subtoken precision/recall/F1 for predicted method names.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::corpus::vocab::{END_OF_NAME, PAD};

/// One line of the prediction JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub predicted: Vec<String>,
    pub reference: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Repeated subtokens must be matched repeatedly.
    #[default]
    Multiset,
    /// Each distinct subtoken counts once per name.
    Set,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub sample_precision: f64,
    pub sample_recall: f64,
    pub sample_f1: f64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub n_snippets: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{predictions} predictions for {references} references")]
pub struct LengthMismatch {
    pub predictions: usize,
    pub references: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn bag(tokens: &[String], mode: MatchMode) -> HashMap<String, u64> {
    let mut out = HashMap::new();
    for t in tokens {
        if t == END_OF_NAME || t == PAD {
            continue;
        }
        let c = out.entry(t.to_lowercase()).or_insert(0);
        *c = match mode {
            MatchMode::Multiset => *c + 1,
            MatchMode::Set => 1,
        };
    }
    out
}

/// Confusion counts for one predicted name against its reference.
pub fn confusion(predicted: &[String], reference: &[String], mode: MatchMode) -> Confusion {
    let p = bag(predicted, mode);
    let r = bag(reference, mode);
    let tp: u64 = p.iter().map(|(t, &c)| c.min(r.get(t).copied().unwrap_or(0))).sum();
    let np: u64 = p.values().sum();
    let nr: u64 = r.values().sum();
    Confusion {
        tp,
        fp: np - tp,
        fn_: nr - tp,
    }
}

/// Pooled (micro) and per-snippet averaged (sample) scores.
pub fn score<P, R>(predictions: &[P], references: &[R], mode: MatchMode) -> Result<ScoreReport, LengthMismatch>
where
    P: AsRef<[String]>,
    R: AsRef<[String]>,
{
    if predictions.len() != references.len() {
        return Err(LengthMismatch {
            predictions: predictions.len(),
            references: references.len(),
        });
    }
    let mut total = Confusion::default();
    let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
    for (p, r) in predictions.iter().zip(references) {
        let c = confusion(p.as_ref(), r.as_ref(), mode);
        total.tp += c.tp;
        total.fp += c.fp;
        total.fn_ += c.fn_;
        sp += c.precision();
        sr += c.recall();
        sf += c.f1();
    }
    let n = predictions.len();
    let mean = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
    Ok(ScoreReport {
        precision: total.precision(),
        recall: total.recall(),
        f1: total.f1(),
        sample_precision: mean(sp),
        sample_recall: mean(sr),
        sample_f1: mean(sf),
        true_positives: total.tp,
        false_positives: total.fp,
        false_negatives: total.fn_,
        n_snippets: n,
    })
}

/// F1 from true/false positives and false negatives pooled over all snippets.
pub fn micro_f1<P, R>(predictions: &[P], references: &[R], mode: MatchMode) -> Result<f64, LengthMismatch>
where
    P: AsRef<[String]>,
    R: AsRef<[String]>,
{
    score(predictions, references, mode).map(|r| r.f1)
}

/// Mean of per-snippet F1 scores.
pub fn sample_f1<P, R>(predictions: &[P], references: &[R], mode: MatchMode) -> Result<f64, LengthMismatch>
where
    P: AsRef<[String]>,
    R: AsRef<[String]>,
{
    score(predictions, references, mode).map(|r| r.sample_f1)
}

/// Share of label subtokens that also occur among the body subtokens of the
/// same snippet, pooled over all snippets. Zero (with a warning) when there
/// are no label subtokens at all.
pub fn label_overlap<'a, I>(snippets: I) -> f64
where
    I: IntoIterator<Item = (&'a [String], &'a [String])>,
{
    let (mut hits, mut total) = (0u64, 0u64);
    for (label, body) in snippets {
        for t in label {
            total += 1;
            if body.contains(t) {
                hits += 1;
            }
        }
    }
    if total == 0 {
        log::warn!("label overlap requested for a split without label subtokens");
        return 0.0;
    }
    hits as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn partial_match() {
        let c = confusion(&v(&["get", "data"]), &v(&["get", "training", "data"]), MatchMode::Multiset);
        assert_eq!((c.tp, c.fp, c.fn_), (2, 0, 1));
        assert_eq!(c.precision(), 1.0);
        assert!((c.recall() - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.f1() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn multiset_vs_set() {
        let p = v(&["test", "test"]);
        let r = v(&["test"]);
        let m = confusion(&p, &r, MatchMode::Multiset);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 1, 0));
        let s = confusion(&p, &r, MatchMode::Set);
        assert_eq!((s.tp, s.fp, s.fn_), (1, 0, 0));
    }

    #[test]
    fn markers_are_ignored_and_case_folded() {
        let c = confusion(&v(&["Get", "[EON]", "[PAD]"]), &v(&["get"]), MatchMode::Multiset);
        assert_eq!((c.tp, c.fp, c.fn_), (1, 0, 0));
    }

    #[test]
    fn length_mismatch() {
        assert!(score(&[v(&["a"])], &Vec::<Vec<String>>::new(), MatchMode::Multiset).is_err());
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let r = score(&[v(&[])], &[v(&["a"])], MatchMode::Multiset).unwrap();
        assert_eq!((r.f1, r.sample_f1), (0.0, 0.0));
    }
}
