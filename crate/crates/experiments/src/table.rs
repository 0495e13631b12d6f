//! Aggregated scores per (method, test task, training setting).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use tagmtl_core::metrics::ScoreStats;

use crate::error::{Error, Result};

/// Which tasks a test task was trained with.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Setting {
    /// Trained alone.
    Stl,
    /// Trained with one helper task.
    Pair(String),
    /// Trained with every registered task.
    All,
    /// Trained with every registered task except the named one.
    AllBut(String),
    /// Trained with its beneficial helpers.
    Oracle,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::Stl => f.write_str("stl"),
            Setting::Pair(s) => write!(f, "+{s}"),
            Setting::All => f.write_str("all"),
            Setting::AllBut(s) => write!(f, "all-{s}"),
            Setting::Oracle => f.write_str("oracle"),
        }
    }
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "stl" => Ok(Setting::Stl),
            "all" => Ok(Setting::All),
            "oracle" => Ok(Setting::Oracle),
            _ => {
                if let Some(t) = s.strip_prefix('+').filter(|t| !t.is_empty()) {
                    Ok(Setting::Pair(t.to_string()))
                } else if let Some(t) = s.strip_prefix("all-").filter(|t| !t.is_empty()) {
                    Ok(Setting::AllBut(t.to_string()))
                } else {
                    Err(format!("unknown setting {s:?}"))
                }
            }
        }
    }
}

/// Score statistics keyed by method and test task. Single-task results are
/// shared by all methods and kept separately.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreTable {
    /// Task order for rendering.
    pub tasks: Vec<String>,
    pub stl: BTreeMap<String, ScoreStats>,
    pub cells: BTreeMap<(String, String, Setting), ScoreStats>,
}

impl ScoreTable {
    pub fn insert(&mut self, method: &str, test: &str, setting: Setting, stats: ScoreStats) {
        self.note_task(test);
        if let Setting::Pair(h) | Setting::AllBut(h) = &setting {
            self.note_task(&h.clone());
        }
        match setting {
            Setting::Stl => {
                self.stl.insert(test.to_string(), stats);
            }
            other => {
                self.cells.insert((method.to_string(), test.to_string(), other), stats);
            }
        }
    }

    fn note_task(&mut self, task: &str) {
        if !self.tasks.iter().any(|t| t == task) {
            self.tasks.push(task.to_string());
        }
    }

    /// Stats of `test` under `setting`; `Stl` ignores the method.
    pub fn get(&self, method: &str, test: &str, setting: &Setting) -> Option<ScoreStats> {
        match setting {
            Setting::Stl => self.stl.get(test).copied(),
            other => self
                .cells
                .get(&(method.to_string(), test.to_string(), other.clone()))
                .copied(),
        }
    }

    /// Methods that have at least one multi-task cell, sorted.
    pub fn methods(&self) -> Vec<String> {
        let mut m: Vec<String> = self.cells.keys().map(|(m, _, _)| m.clone()).collect();
        m.dedup();
        m
    }

    /// Parse `method<TAB>test<TAB>setting<TAB>mean<TAB>std[<TAB>…]` lines.
    /// Blank lines and lines starting with `#` are skipped; extra columns
    /// are ignored. The method column of `stl` rows is ignored.
    pub fn parse_tsv(text: &str, origin: &Path) -> Result<ScoreTable> {
        let mut table = ScoreTable::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: line_no,
                msg,
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 5 {
                return Err(err(format!("expected at least 5 columns, got {}", cols.len())));
            }
            let setting: Setting = cols[2].parse().map_err(err)?;
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| err(format!("bad number {s:?}: {e}")))
            };
            let stats = ScoreStats::new(num(cols[3])?, num(cols[4])?, 0);
            table.insert(cols[0], cols[1], setting, stats);
        }
        Ok(table)
    }

    pub fn load_tsv(path: impl AsRef<Path>) -> Result<ScoreTable> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ScoreTable::parse_tsv(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_roundtrip() {
        for s in [
            Setting::Stl,
            Setting::Pair("ner".into()),
            Setting::All,
            Setting::AllBut("com".into()),
            Setting::Oracle,
        ] {
            assert_eq!(s.to_string().parse::<Setting>().unwrap(), s);
        }
        assert!("+".parse::<Setting>().is_err());
        assert!("bogus".parse::<Setting>().is_err());
    }

    #[test]
    fn parses_rows_and_keeps_task_order() {
        let text = "x\tb\tstl\t90.0\t0.1\n# note\nm\tb\t+a\t91\t0.2\tup\nm\ta\tall-b\t80\t1\n";
        let t = ScoreTable::parse_tsv(text, Path::new("t.tsv")).unwrap();
        assert_eq!(t.tasks, vec!["b", "a"]);
        assert_eq!(t.get("other", "b", &Setting::Stl).unwrap().mean, 90.0);
        assert_eq!(t.get("m", "b", &Setting::Pair("a".into())).unwrap().std, 0.2);
        assert_eq!(t.methods(), vec!["m"]);
    }

    #[test]
    fn reports_line_of_bad_rows() {
        let err = ScoreTable::parse_tsv("m\ta\t+b\tx\t1\n", Path::new("t.tsv")).unwrap_err();
        assert!(err.to_string().starts_with("t.tsv:1:"), "{err}");
    }
}
