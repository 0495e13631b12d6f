//! Per-task, per-split corpus statistics as a TSV table.

use std::fmt::Write as _;

use tagmtl_core::corpus::{dataset_stats, Split, StatsOptions, TaskData};

use crate::error::Result;

pub const STATS_HEADER: &str = "task\tsplit\tsentences\ttokens\ttypes\ttoken_type_ratio\tlabels\tlabel_entropy";

/// One row per task and non-empty split. Label entropy is over the split's
/// token tags in base `opts.entropy_base`; the label count is the task's
/// full label set.
pub fn stats_tsv(data: &[TaskData], opts: StatsOptions) -> Result<String> {
    let mut out = String::from(STATS_HEADER);
    out.push('\n');
    for task in data {
        for (name, split) in [("train", Split::Train), ("dev", Split::Dev), ("test", Split::Test)] {
            if task.split(split).is_empty() {
                continue;
            }
            let s = dataset_stats(task, split, opts)?;
            let _ = writeln!(
                out,
                "{}\t{name}\t{}\t{}\t{}\t{:.4}\t{}\t{:.4}",
                task.spec.name,
                s.sentence_count,
                s.token_count,
                s.type_count,
                s.token_type_ratio,
                s.label_count,
                s.label_entropy
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tagmtl_core::corpus::{Scheme, TaggedSentence};

    #[test]
    fn hand_computed_row() {
        let s = |t: &str, g: &str| {
            TaggedSentence::new(
                t.split(' ').map(String::from).collect(),
                g.split(' ').map(String::from).collect(),
                0,
            )
            .unwrap()
        };
        let train = vec![s("The cat the dog", "D N D N")];
        let task = TaskData::from_sentences(0, "x", Scheme::TokenLevel, train, vec![], vec![]).unwrap();
        let tsv = stats_tsv(&[task], StatsOptions::default()).unwrap();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), 2);
        // 4 tokens, 3 lowercased types, 2 labels split evenly → 1 bit
        assert_eq!(lines[1], "x\ttrain\t1\t4\t3\t1.3333\t2\t1.0000");
    }
}
