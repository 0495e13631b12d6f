//! Span-based scoring, seed aggregation and the `μ ± kσ` comparison rule.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::scheme::{read_chunks, Scheme, OUTSIDE};
use crate::error::{Error, Result};

/// A labeled span with inclusive bounds.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl Span {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Span {
        Span {
            start,
            end,
            label: label.into(),
        }
    }
}

/// Spans of a tag sequence, sorted. Prefixed schemes yield maximal chunks
/// (with the same repair rules as IOBES conversion); token-level schemes
/// yield one length-1 span per non-`O` token.
pub fn extract_spans(tags: &[impl AsRef<str>], scheme: Scheme) -> Vec<Span> {
    let mut spans: Vec<Span> = match scheme {
        Scheme::SpanPrefixed => read_chunks(tags)
            .into_iter()
            .map(|(s, e, t)| Span::new(s, e, t))
            .collect(),
        Scheme::TokenLevel => tags
            .iter()
            .enumerate()
            .filter(|(_, t)| t.as_ref() != OUTSIDE)
            .map(|(i, t)| Span::new(i, i, t.as_ref()))
            .collect(),
    };
    spans.sort();
    spans
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub gold: usize,
    pub predicted: usize,
}

impl F1Score {
    pub fn from_counts(true_positives: usize, gold: usize, predicted: usize) -> F1Score {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(true_positives, predicted);
        let recall = ratio(true_positives, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        F1Score {
            precision,
            recall,
            f1,
            true_positives,
            gold,
            predicted,
        }
    }
}

/// Micro-averaged span F1 pooled over sentences. A predicted span is a true
/// positive iff the identical span occurs in the gold set of its sentence.
pub fn micro_f1(gold: &[Vec<Span>], predicted: &[Vec<Span>]) -> Result<F1Score> {
    if gold.len() != predicted.len() {
        return Err(Error::contract(format!(
            "gold and predicted sentence counts differ ({} vs {})",
            gold.len(),
            predicted.len()
        )));
    }
    let (mut tp, mut n_gold, mut n_pred) = (0, 0, 0);
    for (g, p) in gold.iter().zip(predicted) {
        let g: HashSet<&Span> = g.iter().collect();
        let p: HashSet<&Span> = p.iter().collect();
        tp += p.iter().filter(|s| g.contains(*s)).count();
        n_gold += g.len();
        n_pred += p.len();
    }
    Ok(F1Score::from_counts(tp, n_gold, n_pred))
}

/// Score tag sequences directly.
pub fn tag_f1<S: AsRef<str>>(gold: &[Vec<S>], predicted: &[Vec<S>], scheme: Scheme) -> Result<F1Score> {
    let spans = |v: &[Vec<S>]| v.iter().map(|t| extract_spans(t, scheme)).collect::<Vec<_>>();
    micro_f1(&spans(gold), &spans(predicted))
}

/// Mean and population standard deviation over runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl ScoreStats {
    pub fn new(mean: f64, std: f64, n: usize) -> ScoreStats {
        ScoreStats { mean, std, n }
    }
}

pub fn aggregate(scores: &[f64]) -> Result<ScoreStats> {
    if scores.is_empty() {
        return Err(Error::contract("cannot aggregate zero scores"));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok(ScoreStats {
        mean,
        std: var.sqrt(),
        n: scores.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparison {
    Higher,
    Lower,
    Neutral,
}

pub const DEFAULT_K: f64 = 1.5;

/// `Higher` iff `μa − kσa > μb + kσb`, `Lower` iff `μa + kσa < μb − kσb`.
pub fn compare(a: ScoreStats, b: ScoreStats, k: f64) -> Comparison {
    if a.mean - k * a.std > b.mean + k * b.std {
        Comparison::Higher
    } else if a.mean + k * a.std < b.mean - k * b.std {
        Comparison::Lower
    } else {
        Comparison::Neutral
    }
}
