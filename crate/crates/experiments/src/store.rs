//! Append-only JSON-lines store of per-test-task results.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tagmtl_core::metrics::aggregate;

use crate::error::{Error, Result};
use crate::protocol::Protocol;
use crate::table::{ScoreTable, Setting};

pub const RESULTS_FILE: &str = "results.jsonl";

/// Method label of single-task results.
pub const STL_METHOD: &str = "stl";

/// Test F1 of one task from one trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub mode: Protocol,
    pub method: String,
    /// Training task set, in registry order.
    pub tasks: Vec<String>,
    pub test_task: String,
    pub seed: u64,
    /// Dev F1 of `test_task` after each epoch.
    pub dev_f1_history: Vec<f64>,
    pub test_f1: f64,
    pub best_epoch: usize,
    pub wall_time_s: f64,
    pub config_hash: String,
}

/// Identity of a result: re-running the same key is refused unless forced.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResultKey {
    pub mode: Protocol,
    pub method: String,
    pub tasks: Vec<String>,
    pub test_task: String,
    pub seed: u64,
}

impl std::fmt::Display for ResultKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}/{} [{}] test {} seed {}",
            self.mode,
            self.method,
            self.tasks.join(","),
            self.test_task,
            self.seed
        )
    }
}

impl ResultRecord {
    pub fn key(&self) -> ResultKey {
        ResultKey {
            mode: self.mode,
            method: self.method.clone(),
            tasks: self.tasks.clone(),
            test_task: self.test_task.clone(),
            seed: self.seed,
        }
    }
}

/// Hex SHA-256 of the JSON form of `value`.
pub fn content_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&json)))
}

#[derive(Debug)]
pub struct ResultsStore {
    path: PathBuf,
    /// Every line in file order.
    log: Vec<ResultRecord>,
}

impl ResultsStore {
    /// Open (creating if needed) the store in `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<ResultsStore> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RESULTS_FILE);
        let log = if path.exists() { read_log(&path)? } else { Vec::new() };
        Ok(ResultsStore { path, log })
    }

    /// Read an existing store without creating anything.
    pub fn read(dir: impl AsRef<Path>) -> Result<ResultsStore> {
        let path = dir.as_ref().join(RESULTS_FILE);
        let log = read_log(&path)?;
        Ok(ResultsStore { path, log })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Effective records: for a repeated key the latest line wins.
    pub fn records(&self) -> Vec<&ResultRecord> {
        let mut latest: BTreeMap<ResultKey, usize> = BTreeMap::new();
        for (i, r) in self.log.iter().enumerate() {
            latest.insert(r.key(), i);
        }
        let mut idx: Vec<usize> = latest.into_values().collect();
        idx.sort_unstable();
        idx.into_iter().map(|i| &self.log[i]).collect()
    }

    pub fn get(&self, key: &ResultKey) -> Option<&ResultRecord> {
        self.log.iter().rev().find(|r| &r.key() == key)
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }

    /// Append records. Keys already present are refused unless `force`,
    /// in which case the new lines supersede the old ones.
    pub fn append(&mut self, records: &[ResultRecord], force: bool) -> Result<()> {
        if !force {
            if let Some(r) = records.iter().find(|r| self.get(&r.key()).is_some()) {
                return Err(Error::DuplicateKey {
                    key: r.key().to_string(),
                    path: self.path.clone(),
                });
            }
        }
        let mut text = String::new();
        for r in records {
            text.push_str(&serde_json::to_string(r)?);
            text.push('\n');
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        file.write_all(text.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        self.log.extend_from_slice(records);
        Ok(())
    }

    /// Aggregate test F1 (as percentages) over seeds for every
    /// (method, test task, setting).
    pub fn table(&self) -> Result<ScoreTable> {
        let records = self.records();
        let universe: BTreeSet<&str> = records
            .iter()
            .flat_map(|r| r.tasks.iter().map(String::as_str))
            .collect();
        let mut groups: BTreeMap<(String, String, Setting), Vec<f64>> = BTreeMap::new();
        let mut order: Vec<String> = Vec::new();
        for r in &records {
            for t in &r.tasks {
                if !order.contains(t) {
                    order.push(t.clone());
                }
            }
            let setting = match r.mode {
                Protocol::Stl => Setting::Stl,
                Protocol::Pairwise => match r.tasks.iter().find(|t| **t != r.test_task) {
                    Some(h) => Setting::Pair(h.clone()),
                    None => continue,
                },
                Protocol::All => Setting::All,
                Protocol::Oracle => Setting::Oracle,
                Protocol::AllButOne => {
                    let missing: Vec<&&str> = universe.iter().filter(|t| !r.tasks.iter().any(|x| x == **t)).collect();
                    match missing.as_slice() {
                        [one] => Setting::AllBut(one.to_string()),
                        _ => {
                            log::warn!("cannot tell which task {} leaves out; skipped", r.key());
                            continue;
                        }
                    }
                }
            };
            groups
                .entry((r.method.clone(), r.test_task.clone(), setting))
                .or_default()
                .push(100.0 * r.test_f1);
        }
        let mut table = ScoreTable::default();
        for t in &order {
            table.tasks.push(t.clone());
        }
        for ((method, test, setting), scores) in groups {
            table.insert(&method, &test, setting, aggregate(&scores)?);
        }
        Ok(table)
    }
}

fn read_log(path: &Path) -> Result<Vec<ResultRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}
