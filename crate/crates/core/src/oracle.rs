//! Deliberately naive reference implementations used to check the real
//! ones: exhaustive CRF enumeration, a pairwise IOB2 span reader, per-token
//! scoring and a scalar-loop GRU step.

use crate::metrics::Span;
use crate::tensor::{log_sum_exp, Tensor};

/// Every label sequence of length `len` over `labels`, in lexicographic order.
pub fn all_sequences(len: usize, labels: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                labels.iter().map(move |&y| {
                    let mut p = prefix.clone();
                    p.push(y);
                    p
                })
            })
            .collect();
    }
    out
}

/// Path score with START = K and STOP = K + 1 in a `(K+2)×(K+2)` matrix.
pub fn path_score(emissions: &Tensor, transitions: &Tensor, path: &[usize]) -> f64 {
    let k = emissions.cols();
    let (start, stop) = (k, k + 1);
    let mut score = transitions.get(start, path[0]) + transitions.get(*path.last().expect("non-empty"), stop);
    for (l, &y) in path.iter().enumerate() {
        score += emissions.get(l, y);
        if l > 0 {
            score += transitions.get(path[l - 1], y);
        }
    }
    score
}

fn allowed(k: usize, mask: Option<&[bool]>) -> Vec<usize> {
    (0..k).filter(|&j| mask.is_none_or(|m| m[j])).collect()
}

/// `log Σ exp(score)` over every allowed sequence.
pub fn brute_log_partition(emissions: &Tensor, transitions: &Tensor, mask: Option<&[bool]>) -> f64 {
    let labels = allowed(emissions.cols(), mask);
    let scores: Vec<f64> = all_sequences(emissions.rows(), &labels)
        .iter()
        .map(|p| path_score(emissions, transitions, p))
        .collect();
    log_sum_exp(&scores)
}

/// Highest-scoring allowed sequence; the lexicographically first on ties.
pub fn brute_argmax(emissions: &Tensor, transitions: &Tensor, mask: Option<&[bool]>) -> Vec<usize> {
    let labels = allowed(emissions.cols(), mask);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for p in all_sequences(emissions.rows(), &labels) {
        let s = path_score(emissions, transitions, &p);
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, p));
        }
    }
    best.expect("at least one sequence").1
}

/// IOB2 spans found by testing every `(i, j)` pair: `B-X` at `i`, `I-X`
/// through `j`, and no `I-X` right after `j`. Only valid for well-formed IOB2.
pub fn iob2_spans(tags: &[&str]) -> Vec<Span> {
    let n = tags.len();
    let mut spans = Vec::new();
    for i in 0..n {
        let Some(ty) = tags[i].strip_prefix("B-") else { continue };
        let inside = format!("I-{ty}");
        for j in i..n {
            if tags[i + 1..=j].iter().all(|t| *t == inside) && (j + 1 == n || tags[j + 1] != inside) {
                spans.push(Span::new(i, j, ty));
            }
        }
    }
    spans.sort();
    spans
}

/// Per-token `(true positives, gold, predicted)` counts for token-level tags.
pub fn token_counts(gold: &[Vec<&str>], predicted: &[Vec<&str>]) -> (usize, usize, usize) {
    let (mut tp, mut g, mut p) = (0, 0, 0);
    for (gs, ps) in gold.iter().zip(predicted) {
        for (a, b) in gs.iter().zip(ps) {
            g += usize::from(*a != "O");
            p += usize::from(*b != "O");
            tp += usize::from(*a != "O" && a == b);
        }
    }
    (tp, g, p)
}

/// Weights for [`scalar_gru_step`]; matrices are `input × hidden` and
/// `hidden × hidden` stored as nested rows.
pub struct ScalarGru {
    pub wz: Vec<Vec<f64>>,
    pub wr: Vec<Vec<f64>>,
    pub wh: Vec<Vec<f64>>,
    pub uz: Vec<Vec<f64>>,
    pub ur: Vec<Vec<f64>>,
    pub uh: Vec<Vec<f64>>,
    pub bz: Vec<f64>,
    pub br: Vec<f64>,
    pub bh: Vec<f64>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One GRU step written as explicit loops:
/// `h' = (1 − z)·h + z·tanh(x Wh + (r ⊙ h) Uh + bh)`.
pub fn scalar_gru_step(cell: &ScalarGru, x: &[f64], h: &[f64]) -> Vec<f64> {
    let hidden = h.len();
    let mut out = vec![0.0; hidden];
    let mut r = vec![0.0; hidden];
    for j in 0..hidden {
        let mut a = cell.br[j];
        for i in 0..x.len() {
            a += x[i] * cell.wr[i][j];
        }
        for k in 0..hidden {
            a += h[k] * cell.ur[k][j];
        }
        r[j] = logistic(a);
    }
    for j in 0..hidden {
        let mut az = cell.bz[j];
        let mut ah = cell.bh[j];
        for i in 0..x.len() {
            az += x[i] * cell.wz[i][j];
            ah += x[i] * cell.wh[i][j];
        }
        for k in 0..hidden {
            az += h[k] * cell.uz[k][j];
            ah += r[k] * h[k] * cell.uh[k][j];
        }
        let z = logistic(az);
        out[j] = (1.0 - z) * h[j] + z * ah.tanh();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_all_sequences() {
        let s = all_sequences(3, &[0, 1]);
        assert_eq!(s.len(), 8);
        assert_eq!(s[0], vec![0, 0, 0]);
        assert_eq!(s[7], vec![1, 1, 1]);
    }

    #[test]
    fn iob2_reader() {
        assert_eq!(
            iob2_spans(&["B-NP", "I-NP", "B-NP", "O", "B-VP"]),
            vec![Span::new(0, 1, "NP"), Span::new(2, 2, "NP"), Span::new(4, 4, "VP")]
        );
    }

    #[test]
    fn uniform_partition() {
        let e = Tensor::zeros(3, 2);
        let t = Tensor::zeros(4, 4);
        assert!((brute_log_partition(&e, &t, None) - 3.0 * 2f64.ln()).abs() < 1e-12);
    }
}
