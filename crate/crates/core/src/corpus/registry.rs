//! Task registry: one task per line, `name<TAB>scheme<TAB>train,dev,test`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::column::{read_column_file, TaggedSentence};
use super::scheme::{to_iobes, Scheme};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPaths {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: usize,
    pub name: String,
    /// Ordered, duplicate-free; filled in when the data is loaded.
    pub label_set: Vec<String>,
    pub scheme: Scheme,
    pub split_paths: SplitPaths,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Registry {
    pub tasks: Vec<TaskSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// A task with its three loaded splits.
#[derive(Clone, Debug)]
pub struct TaskData {
    pub spec: TaskSpec,
    pub train: Vec<TaggedSentence>,
    pub dev: Vec<TaggedSentence>,
    pub test: Vec<TaggedSentence>,
}

impl TaskData {
    pub fn split(&self, split: Split) -> &[TaggedSentence] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    /// Build from in-memory sentences, normalizing tags and collecting the
    /// label set. Task ids on the sentences are overwritten.
    pub fn from_sentences(
        task_id: usize,
        name: impl Into<String>,
        scheme: Scheme,
        train: Vec<TaggedSentence>,
        dev: Vec<TaggedSentence>,
        test: Vec<TaggedSentence>,
    ) -> Result<TaskData> {
        let name = name.into();
        if train.is_empty() {
            return Err(Error::contract(format!("task {name} has no training sentences")));
        }
        let normalize = |mut v: Vec<TaggedSentence>| {
            for s in &mut v {
                s.task_id = task_id;
                if scheme == Scheme::SpanPrefixed {
                    s.tags = to_iobes(&s.tags);
                }
            }
            v
        };
        let (train, dev, test) = (normalize(train), normalize(dev), normalize(test));
        let labels: BTreeSet<&str> = train
            .iter()
            .chain(&dev)
            .chain(&test)
            .flat_map(|s| s.tags.iter().map(String::as_str))
            .collect();
        let spec = TaskSpec {
            task_id,
            name,
            label_set: labels.into_iter().map(str::to_string).collect(),
            scheme,
            split_paths: SplitPaths {
                train: PathBuf::new(),
                dev: PathBuf::new(),
                test: PathBuf::new(),
            },
        };
        Ok(TaskData { spec, train, dev, test })
    }
}

impl Registry {
    pub fn parse(text: &str, base_dir: &Path, origin: &Path) -> Result<Registry> {
        let mut tasks = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: lineno + 1,
                msg,
            };
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err(format!("expected 3 tab-separated fields, got {}", fields.len())));
            }
            let scheme = Scheme::parse(fields[1]).ok_or_else(|| err(format!("unknown scheme {:?}", fields[1])))?;
            let paths: Vec<&str> = fields[2].split(',').map(str::trim).collect();
            if paths.len() != 3 {
                return Err(err("expected train,dev,test paths".into()));
            }
            if tasks.iter().any(|t: &TaskSpec| t.name == fields[0]) {
                return Err(err(format!("duplicate task {}", fields[0])));
            }
            let resolve = |p: &str| {
                let p = PathBuf::from(p);
                if p.is_absolute() {
                    p
                } else {
                    base_dir.join(p)
                }
            };
            tasks.push(TaskSpec {
                task_id: tasks.len(),
                name: fields[0].to_string(),
                label_set: Vec::new(),
                scheme,
                split_paths: SplitPaths {
                    train: resolve(paths[0]),
                    dev: resolve(paths[1]),
                    test: resolve(paths[2]),
                },
            });
        }
        Ok(Registry { tasks })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Registry> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Registry::parse(&text, base, path)
    }

    pub fn names(&self) -> Vec<String> {
        self.tasks.iter().map(|t| t.name.clone()).collect()
    }

    pub fn find(&self, name: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.name == name)
    }

    /// Serialize back to the registry text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tasks {
            out.push_str(&format!(
                "{}\t{}\t{},{},{}\n",
                t.name,
                t.scheme.as_str(),
                t.split_paths.train.display(),
                t.split_paths.dev.display(),
                t.split_paths.test.display()
            ));
        }
        out
    }

    /// Read every split of every task. Task ids follow registry order.
    pub fn load_data(&self) -> Result<Vec<TaskData>> {
        self.tasks
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let mut data = TaskData::from_sentences(
                    i,
                    spec.name.clone(),
                    spec.scheme,
                    read_column_file(&spec.split_paths.train)?,
                    read_column_file(&spec.split_paths.dev)?,
                    read_column_file(&spec.split_paths.test)?,
                )?;
                data.spec.split_paths = spec.split_paths.clone();
                Ok(data)
            })
            .collect()
    }
}
