//! A small synthetic two-task corpus used for end-to-end checks.
//!
//! * `initial` tags each token `V` or `C` depending on whether the word
//!   starts with a vowel.
//! * `parity` tags each token `EVEN` or `ODD` by its 0-based position.
//!
//! Both tasks are token-level, drawn over a fixed 50-word vocabulary with
//! sentence lengths 5..=12.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::column::{write_column_file, TaggedSentence};
use super::registry::TaskData;
use super::scheme::Scheme;
use crate::error::{Error, Result};

pub const VOCAB_SIZE: usize = 50;
pub const MIN_LEN: usize = 5;
pub const MAX_LEN: usize = 12;
pub const TASK_NAMES: [&str; 2] = ["initial", "parity"];

const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];
const CONSONANTS: [char; 10] = ['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 't'];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Default for SyntheticSizes {
    fn default() -> Self {
        SyntheticSizes {
            train: 500,
            dev: 100,
            test: 100,
        }
    }
}

/// The fixed vocabulary: 25 vowel-initial and 25 consonant-initial words.
pub fn vocabulary() -> Vec<String> {
    let mut words = Vec::with_capacity(VOCAB_SIZE);
    for i in 0..VOCAB_SIZE / 2 {
        let v = VOWELS[i % 5];
        let c = CONSONANTS[i / 5 * 2 % 10];
        let c2 = CONSONANTS[(i * 3 + 1) % 10];
        // vowel-initial: v c v' ; consonant-initial: c' v c
        words.push(format!("{v}{c}{}", VOWELS[(i / 5) % 5]));
        words.push(format!("{c2}{v}{c}"));
    }
    words
}

pub fn starts_with_vowel(word: &str) -> bool {
    word.chars()
        .next()
        .is_some_and(|c| VOWELS.contains(&c.to_ascii_lowercase()))
}

fn sentence<R: Rng>(words: &[String], task: usize, rng: &mut R) -> TaggedSentence {
    let len = rng.gen_range(MIN_LEN..=MAX_LEN);
    let tokens: Vec<String> = (0..len)
        .map(|_| words.choose(rng).expect("non-empty").clone())
        .collect();
    let tags = tokens
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let tag = if task == 0 {
                if starts_with_vowel(w) {
                    "V"
                } else {
                    "C"
                }
            } else if i % 2 == 0 {
                "EVEN"
            } else {
                "ODD"
            };
            tag.to_string()
        })
        .collect();
    TaggedSentence::new(tokens, tags, task).expect("non-empty sentence")
}

/// Generate both tasks deterministically from `seed`.
pub fn generate(seed: u64, sizes: SyntheticSizes) -> Result<Vec<TaskData>> {
    let words = vocabulary();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TASK_NAMES
        .iter()
        .enumerate()
        .map(|(task, name)| {
            let mut split = |n: usize| (0..n).map(|_| sentence(&words, task, &mut rng)).collect::<Vec<_>>();
            let (train, dev, test) = (split(sizes.train), split(sizes.dev), split(sizes.test));
            TaskData::from_sentences(task, *name, Scheme::TokenLevel, train, dev, test)
        })
        .collect()
}

/// Write the corpus as column files plus a `registry.tsv` into `dir`;
/// returns the registry path.
pub fn write_fixture(dir: impl AsRef<Path>, seed: u64, sizes: SyntheticSizes) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut registry = String::new();
    for task in generate(seed, sizes)? {
        let name = &task.spec.name;
        for (split, sents) in [("train", &task.train), ("dev", &task.dev), ("test", &task.test)] {
            write_column_file(dir.join(format!("{name}.{split}.tsv")), sents)?;
        }
        registry.push_str(&format!(
            "{name}\ttoken\t{name}.train.tsv,{name}.dev.tsv,{name}.test.tsv\n"
        ));
    }
    let path = dir.join("registry.tsv");
    fs::write(&path, registry).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
