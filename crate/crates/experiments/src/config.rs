//! TOML experiment configuration. Every `run` flag has a key here; model
//! dimensions and training hyperparameters go in `[model]` and `[train]`.
//!
//! ```toml
//! registry = "tasks.tsv"
//! mode = "pairwise"
//! method = "te-dec"
//! seeds = 3
//! out = "results"
//! embeddings = "vectors.txt"   # optional
//! k = 1.5
//!
//! [model]
//! task_emb = 25
//! [model.encoder]
//! word_hidden = 300
//!
//! [train]
//! max_epochs = 100
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tagmtl_core::metrics::DEFAULT_K;
use tagmtl_core::model::{Mode, ModelConfig};
use tagmtl_core::trainer::TrainConfig;

use crate::error::{Error, Result};
use crate::protocol::Protocol;
use crate::store::content_hash;

pub const DEFAULT_SEEDS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub registry: Option<PathBuf>,
    pub mode: Option<Protocol>,
    pub method: Option<Mode>,
    pub seeds: usize,
    pub out: Option<PathBuf>,
    pub force: bool,
    pub embeddings: Option<PathBuf>,
    pub k: f64,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            registry: None,
            mode: None,
            method: None,
            seeds: DEFAULT_SEEDS,
            out: None,
            force: false,
            embeddings: None,
            k: DEFAULT_K,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// The parts of a configuration that change what a trained model is; the
/// seed is part of each result's key instead.
#[derive(Serialize)]
struct Fingerprint<'a> {
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    embeddings: Option<String>,
}

impl ExperimentConfig {
    /// Parse TOML; relative paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<ExperimentConfig> {
        let mut c: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for p in [&mut c.registry, &mut c.out, &mut c.embeddings].into_iter().flatten() {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Seeds `1..=seeds`.
    pub fn seed_list(&self) -> Vec<u64> {
        (1..=self.seeds as u64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::Config(format!(
                "k must be a non-negative number, got {}",
                self.k
            )));
        }
        self.train.validate()?;
        Ok(())
    }

    /// Content hash of model, training and embedding settings (seed excluded).
    pub fn hash(&self) -> Result<String> {
        let train = TrainConfig {
            seed: 0,
            ..self.train.clone()
        };
        content_hash(&Fingerprint {
            model: &self.model,
            train: &train,
            embeddings: self.embeddings.as_ref().map(|p| p.display().to_string()),
        })
    }
}
