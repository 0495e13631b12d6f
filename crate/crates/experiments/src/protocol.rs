//! Which models to train for each protocol, and the sweep driver.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tagmtl_core::corpus::TaskData;
use tagmtl_core::model::{Mode, Model, ModelConfig};
use tagmtl_core::trainer::{train, Checkpoint, RunRecord, TrainConfig};

use crate::error::{Error, Result};
use crate::relations::{classify_relations, PairwiseMatrix};
use crate::store::{ResultRecord, ResultsStore, STL_METHOD};
use crate::table::ScoreTable;

/// Which task sets get trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// One model per task.
    Stl,
    /// One model per unordered task pair, scored on both tasks.
    Pairwise,
    /// One model over every task.
    All,
    /// One model per task left out, scored on the remaining tasks.
    AllButOne,
    /// Per test task, one model over the task and its beneficial helpers.
    Oracle,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Stl => "stl",
            Protocol::Pairwise => "pairwise",
            Protocol::All => "all",
            Protocol::AllButOne => "all-but-one",
            Protocol::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "stl" => Ok(Protocol::Stl),
            "pairwise" => Ok(Protocol::Pairwise),
            "all" => Ok(Protocol::All),
            "all-but-one" => Ok(Protocol::AllButOne),
            "oracle" => Ok(Protocol::Oracle),
            _ => Err(format!(
                "unknown mode {s:?} (expected stl, pairwise, all, all-but-one or oracle)"
            )),
        }
    }
}

/// One task set to train and the tasks to score it on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration {
    pub tasks: Vec<String>,
    pub test_tasks: Vec<String>,
}

/// Configurations implied by `protocol` over `tasks` (registry order).
/// Oracle planning needs the helper sets; tasks whose set is empty are
/// skipped, since their oracle result is the single-task result.
pub fn plan(
    protocol: Protocol,
    tasks: &[String],
    oracle_sets: Option<&BTreeMap<String, Vec<String>>>,
) -> Result<Vec<Configuration>> {
    let both = |v: Vec<String>| Configuration {
        tasks: v.clone(),
        test_tasks: v,
    };
    if tasks.is_empty() {
        return Err(Error::Config("the registry has no tasks".into()));
    }
    if matches!(protocol, Protocol::Pairwise | Protocol::AllButOne) && tasks.len() < 2 {
        return Err(Error::Config(format!("{protocol} needs at least two tasks")));
    }
    Ok(match protocol {
        Protocol::Stl => tasks.iter().map(|t| both(vec![t.clone()])).collect(),
        Protocol::Pairwise => {
            let mut out = Vec::new();
            for i in 0..tasks.len() {
                for j in i + 1..tasks.len() {
                    out.push(both(vec![tasks[i].clone(), tasks[j].clone()]));
                }
            }
            out
        }
        Protocol::All => vec![both(tasks.to_vec())],
        Protocol::AllButOne => tasks
            .iter()
            .map(|left_out| both(tasks.iter().filter(|t| *t != left_out).cloned().collect()))
            .collect(),
        Protocol::Oracle => {
            let sets = oracle_sets.ok_or_else(|| Error::Config("oracle planning needs helper sets".into()))?;
            tasks
                .iter()
                .filter_map(|t| {
                    let helpers = sets.get(t).filter(|h| !h.is_empty())?;
                    let members = tasks
                        .iter()
                        .filter(|x| *x == t || helpers.contains(x))
                        .cloned()
                        .collect();
                    Some(Configuration {
                        tasks: members,
                        test_tasks: vec![t.clone()],
                    })
                })
                .collect()
        }
    })
}

/// Beneficial helpers of every task under `method`, from a complete
/// pairwise matrix. Missing single-task or pairwise results are an error
/// that lists every gap.
pub fn oracle_sets(
    table: &ScoreTable,
    method: &str,
    tasks: &[String],
    k: f64,
) -> Result<BTreeMap<String, Vec<String>>> {
    let matrix = PairwiseMatrix::from_table(table, method, tasks);
    let missing = matrix.missing();
    if !missing.is_empty() {
        return Err(Error::MissingPrerequisites(
            missing.into_iter().map(|m| format!("{method}: {m}")).collect(),
        ));
    }
    Ok(classify_relations(&matrix, k).oracle_sets())
}

/// A single training job handed to the trainer.
pub struct Job {
    pub protocol: Protocol,
    pub mode: Mode,
    pub data: Vec<TaskData>,
    pub seed: u64,
}

impl Job {
    pub fn task_names(&self) -> Vec<String> {
        self.data.iter().map(|d| d.spec.name.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub protocol: Protocol,
    /// Multi-task method; ignored for single-task runs.
    pub method: Mode,
    pub seeds: Vec<u64>,
    pub force: bool,
    pub k: f64,
}

impl RunSpec {
    pub fn method_label(&self) -> &'static str {
        if self.protocol == Protocol::Stl {
            STL_METHOD
        } else {
            self.method.as_str()
        }
    }

    fn model_mode(&self) -> Mode {
        if self.protocol == Protocol::Stl {
            Mode::Stl
        } else {
            self.method
        }
    }
}

/// Train every configuration × seed of `spec` and append one record per
/// test task. Configurations already stored with the same config hash are
/// skipped so interrupted sweeps resume; a stored result with a different
/// hash is refused unless `spec.force`.
pub fn run(
    spec: &RunSpec,
    data: &[TaskData],
    store: &mut ResultsStore,
    config_hash: &str,
    trainer: &mut dyn FnMut(&Job) -> Result<RunRecord>,
) -> Result<Vec<ResultRecord>> {
    if spec.protocol != Protocol::Stl && spec.method == Mode::Stl {
        return Err(Error::Config(format!("{} needs a multi-task method", spec.protocol)));
    }
    if spec.seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let names: Vec<String> = data.iter().map(|d| d.spec.name.clone()).collect();
    let method = spec.method_label();
    let sets = if spec.protocol == Protocol::Oracle {
        let sets = oracle_sets(&store.table()?, method, &names, spec.k)?;
        for (t, helpers) in &sets {
            if helpers.is_empty() {
                log::info!("{t} has no beneficial helpers under {method}; its oracle result is the single-task result");
            }
        }
        Some(sets)
    } else {
        None
    };
    let configurations = plan(spec.protocol, &names, sets.as_ref())?;

    let mut added = Vec::new();
    for config in &configurations {
        for &seed in &spec.seeds {
            let records: Vec<ResultRecord> = config
                .test_tasks
                .iter()
                .map(|t| ResultRecord {
                    mode: spec.protocol,
                    method: method.to_string(),
                    tasks: config.tasks.clone(),
                    test_task: t.clone(),
                    seed,
                    dev_f1_history: Vec::new(),
                    test_f1: 0.0,
                    best_epoch: 0,
                    wall_time_s: 0.0,
                    config_hash: config_hash.to_string(),
                })
                .collect();
            if !spec.force {
                let existing: Vec<&ResultRecord> = records.iter().filter_map(|r| store.get(&r.key())).collect();
                if let Some(stale) = existing.iter().find(|r| r.config_hash != config_hash) {
                    return Err(Error::DuplicateKey {
                        key: stale.key().to_string(),
                        path: store.path().to_path_buf(),
                    });
                }
                if existing.len() == records.len() {
                    log::info!("skipping {} seed {seed}: already stored", config.tasks.join("+"));
                    continue;
                }
            }
            let job = Job {
                protocol: spec.protocol,
                mode: spec.model_mode(),
                data: config
                    .tasks
                    .iter()
                    .map(|t| {
                        data.iter()
                            .find(|d| &d.spec.name == t)
                            .expect("planned from data")
                            .clone()
                    })
                    .collect(),
                seed,
            };
            log::info!(
                "training {} {} on {} (seed {seed})",
                spec.protocol,
                method,
                config.tasks.join("+")
            );
            let run = trainer(&job)?;
            let filled: Vec<ResultRecord> = records
                .into_iter()
                .map(|mut r| {
                    let idx = config
                        .tasks
                        .iter()
                        .position(|t| *t == r.test_task)
                        .expect("test task in set");
                    r.dev_f1_history = run.epochs.iter().map(|e| e.dev_f1[idx]).collect();
                    r.test_f1 = run.test_f1[idx];
                    r.best_epoch = run.best_epoch;
                    r.wall_time_s = run.wall_time_s;
                    r
                })
                .collect();
            store.append(&filled, true)?;
            added.extend(filled);
        }
    }
    Ok(added)
}

/// Builds and trains real models, optionally saving a checkpoint per job.
pub struct CoreTrainer {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub embeddings: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl CoreTrainer {
    pub fn checkpoint_name(job: &Job) -> String {
        format!(
            "{}_{}_{}_seed{}.json",
            job.protocol,
            job.mode,
            job.task_names().join("+"),
            job.seed
        )
    }

    pub fn train_job(&self, job: &Job) -> Result<RunRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
        let (mut model, coverage) =
            Model::for_tasks(job.mode, self.model, &job.data, self.embeddings.as_deref(), &mut rng)?;
        if let Some(c) = coverage {
            log::info!("pretrained coverage: {} covered, {} uncovered", c.covered, c.uncovered);
        }
        let config = TrainConfig {
            seed: job.seed,
            ..self.train.clone()
        };
        let out = train(&mut model, &job.data, &config, |e| {
            log::debug!("epoch {} loss {:.4} dev {:?}", e.epoch, e.mean_loss, e.dev_f1)
        })?;
        if let Some(dir) = &self.checkpoint_dir {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(Self::checkpoint_name(job));
            Checkpoint::new(&model, Some(&out.optimizer), Some(&out.rng), Some(&out.record)).save(path)?;
        }
        Ok(out.record)
    }
}
