use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::registry::{Split, TaskData};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsOptions {
    /// Logarithm base for the label entropy.
    pub entropy_base: f64,
    /// Count types over lowercased tokens (otherwise raw surface forms).
    pub lowercase_types: bool,
}

impl Default for StatsOptions {
    fn default() -> Self {
        StatsOptions {
            entropy_base: 2.0,
            lowercase_types: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub sentence_count: usize,
    pub token_count: usize,
    pub type_count: usize,
    pub token_type_ratio: f64,
    pub label_count: usize,
    pub label_entropy: f64,
}

/// Entropy of an empirical distribution given by counts.
pub fn entropy(counts: impl IntoIterator<Item = usize>, base: f64) -> f64 {
    let counts: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let h: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    // avoid -0.0 for single-label distributions
    (h / base.ln()).max(0.0)
}

pub fn dataset_stats(task: &TaskData, split: Split, opts: StatsOptions) -> Result<DatasetStats> {
    let sentences = task.split(split);
    if sentences.is_empty() {
        return Err(Error::contract(format!(
            "task {} has an empty {split:?} split",
            task.spec.name
        )));
    }
    if !(opts.entropy_base > 0.0 && opts.entropy_base != 1.0) {
        return Err(Error::contract("entropy base must be positive and not 1"));
    }
    let mut types = HashSet::new();
    let mut labels: BTreeMap<&str, usize> = BTreeMap::new();
    let mut token_count = 0;
    for s in sentences {
        let forms = if opts.lowercase_types { &s.lowercased } else { &s.tokens };
        for (form, tag) in forms.iter().zip(&s.tags) {
            types.insert(form.as_str());
            *labels.entry(tag.as_str()).or_default() += 1;
            token_count += 1;
        }
    }
    Ok(DatasetStats {
        sentence_count: sentences.len(),
        token_count,
        type_count: types.len(),
        token_type_ratio: token_count as f64 / types.len() as f64,
        label_count: task.spec.label_set.len(),
        label_entropy: entropy(labels.into_values(), opts.entropy_base),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::column::TaggedSentence;
    use crate::corpus::scheme::Scheme;

    #[test]
    fn entropy_examples() {
        assert!((entropy([5, 5, 5, 5], 2.0) - 2.0).abs() < 1e-12);
        assert_eq!(entropy([7], 2.0), 0.0);
        assert!((entropy([1, 1], std::f64::consts::E) - 2f64.ln()).abs() < 1e-12);
    }

    fn task(tokens: &[&[&str]]) -> TaskData {
        let sents = tokens
            .iter()
            .map(|t| {
                TaggedSentence::new(
                    t.iter().map(|s| s.to_string()).collect(),
                    t.iter()
                        .enumerate()
                        .map(|(i, _)| if i % 2 == 0 { "A" } else { "B" }.to_string())
                        .collect(),
                    0,
                )
                .unwrap()
            })
            .collect();
        TaskData::from_sentences(0, "t", Scheme::TokenLevel, sents, vec![], vec![]).unwrap()
    }

    #[test]
    fn counts_lowercased_types() {
        let t = task(&[&["The", "cat"], &["the", "dog"]]);
        let s = dataset_stats(&t, Split::Train, StatsOptions::default()).unwrap();
        assert_eq!((s.sentence_count, s.token_count, s.type_count), (2, 4, 3));
        assert!((s.token_type_ratio - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.label_count, 2);
        assert!((s.label_entropy - 1.0).abs() < 1e-12);
        let raw = dataset_stats(
            &t,
            Split::Train,
            StatsOptions {
                lowercase_types: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(raw.type_count, 4);
    }

    #[test]
    fn empty_split_is_contract_error() {
        let t = task(&[&["x"]]);
        assert!(matches!(
            dataset_stats(&t, Split::Dev, StatsOptions::default()),
            Err(Error::Contract(_))
        ));
    }
}
