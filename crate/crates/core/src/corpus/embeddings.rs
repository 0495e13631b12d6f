//! Pretrained word vectors in the plain text format `word v1 ... vd`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::init::{init_parameter, InitKind};
use crate::tensor::Tensor;

pub const DEFAULT_WORD_DIM: usize = 50;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Non-reserved vocabulary words found in the file.
    pub covered: usize,
    /// Non-reserved vocabulary words initialized randomly.
    pub uncovered: usize,
    /// Words that appeared on more than one line (the last line wins).
    pub duplicates: Vec<String>,
}

/// Parse embedding text, keyed by lowercased word.
pub fn parse_embeddings(text: &str, dim: usize, origin: &Path) -> Result<(HashMap<String, Vec<f64>>, Vec<String>)> {
    let mut vectors = HashMap::new();
    let mut duplicates = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: lineno + 1,
                msg: format!("bad number: {e}"),
            })?;
        if values.len() != dim {
            return Err(Error::Format(format!(
                "{}:{}: expected {dim} values for {word:?}, found {}",
                origin.display(),
                lineno + 1,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "{}:{}: non-finite value",
                origin.display(),
                lineno + 1
            )));
        }
        let key = word.to_lowercase();
        if vectors.insert(key.clone(), values).is_some() {
            log::warn!(
                "duplicate embedding for {key:?} at line {}; keeping the last",
                lineno + 1
            );
            duplicates.push(key);
        }
    }
    Ok((vectors, duplicates))
}

/// Build the word-embedding matrix for `vocab`. Rows for words present in
/// `vectors` are copied; all other rows (including reserved ones) are drawn
/// uniformly in `±√(3/dim)`.
pub fn embedding_matrix<R: Rng + ?Sized>(
    vocab: &Vocabulary,
    vectors: &HashMap<String, Vec<f64>>,
    dim: usize,
    rng: &mut R,
) -> (Tensor, CoverageReport) {
    let mut table = init_parameter(vocab.num_words(), dim, InitKind::UncoveredWordEmbedding, rng);
    let mut report = CoverageReport::default();
    for (word, id) in vocab.words() {
        if Vocabulary::is_reserved(id) {
            continue;
        }
        match vectors.get(word) {
            Some(v) => {
                table.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(v);
                report.covered += 1;
            }
            None => report.uncovered += 1,
        }
    }
    (table, report)
}

pub fn load_pretrained<R: Rng + ?Sized>(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<(Tensor, CoverageReport)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (vectors, duplicates) = parse_embeddings(&text, dim, path)?;
    let (table, mut report) = embedding_matrix(vocab, &vectors, dim, rng);
    report.duplicates = duplicates;
    log::info!(
        "pretrained embeddings: {} covered, {} uncovered",
        report.covered,
        report.uncovered
    );
    Ok((table, report))
}
