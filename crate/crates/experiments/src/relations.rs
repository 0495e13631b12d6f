//! Helper → test-task relations from pairwise results.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use tagmtl_core::metrics::{compare, Comparison, ScoreStats};

use crate::table::{ScoreTable, Setting};

/// `cells[s][t]` holds the stats of test task `t` trained with helper `s`;
/// the diagonal holds the single-task stats of `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseMatrix {
    pub tasks: Vec<String>,
    pub cells: Vec<Vec<Option<ScoreStats>>>,
}

impl PairwiseMatrix {
    pub fn from_table(table: &ScoreTable, method: &str, tasks: &[String]) -> PairwiseMatrix {
        let cells = tasks
            .iter()
            .map(|s| {
                tasks
                    .iter()
                    .map(|t| {
                        let setting = if s == t { Setting::Stl } else { Setting::Pair(s.clone()) };
                        table.get(method, t, &setting)
                    })
                    .collect()
            })
            .collect();
        PairwiseMatrix {
            tasks: tasks.to_vec(),
            cells,
        }
    }

    pub fn index(&self, task: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t == task)
    }

    /// Descriptions of every missing cell, in row-major order.
    pub fn missing(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (s, row) in self.cells.iter().enumerate() {
            for (t, cell) in row.iter().enumerate() {
                if cell.is_none() {
                    out.push(if s == t {
                        format!("stl {}", self.tasks[t])
                    } else {
                        format!("{} tested with +{}", self.tasks[t], self.tasks[s])
                    });
                }
            }
        }
        out
    }
}

/// Classified edges plus per-helper (row) and per-test-task (column)
/// counts of beneficial and harmful relations.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationEdges {
    pub tasks: Vec<String>,
    /// `edges[s][t]`; `None` on the diagonal and where a cell is missing.
    pub edges: Vec<Vec<Option<Comparison>>>,
    pub row_up: Vec<usize>,
    pub row_down: Vec<usize>,
    pub col_up: Vec<usize>,
    pub col_down: Vec<usize>,
}

/// Compare every off-diagonal cell against its column's single-task
/// stats with the `μ ± kσ` rule.
pub fn classify_relations(matrix: &PairwiseMatrix, k: f64) -> RelationEdges {
    let n = matrix.tasks.len();
    let mut edges = vec![vec![None; n]; n];
    let (mut row_up, mut row_down, mut col_up, mut col_down) = (vec![0; n], vec![0; n], vec![0; n], vec![0; n]);
    for s in 0..n {
        for t in 0..n {
            if s == t {
                continue;
            }
            let (Some(pair), Some(stl)) = (matrix.cells[s][t], matrix.cells[t][t]) else {
                continue;
            };
            let c = compare(pair, stl, k);
            match c {
                Comparison::Higher => {
                    row_up[s] += 1;
                    col_up[t] += 1;
                }
                Comparison::Lower => {
                    row_down[s] += 1;
                    col_down[t] += 1;
                }
                Comparison::Neutral => {}
            }
            edges[s][t] = Some(c);
        }
    }
    RelationEdges {
        tasks: matrix.tasks.clone(),
        edges,
        row_up,
        row_down,
        col_up,
        col_down,
    }
}

impl RelationEdges {
    pub fn edge(&self, helper: &str, test: &str) -> Option<Comparison> {
        let s = self.tasks.iter().position(|t| t == helper)?;
        let t = self.tasks.iter().position(|x| x == test)?;
        self.edges[s][t]
    }

    /// Every helper whose edge into `test` is beneficial, in task order.
    pub fn oracle_set(&self, test: &str) -> Vec<String> {
        let Some(t) = self.tasks.iter().position(|x| x == test) else {
            return Vec::new();
        };
        self.tasks
            .iter()
            .enumerate()
            .filter(|&(s, _)| self.edges[s][t] == Some(Comparison::Higher))
            .map(|(_, name)| name.clone())
            .collect()
    }

    pub fn oracle_sets(&self) -> BTreeMap<String, Vec<String>> {
        self.tasks.iter().map(|t| (t.clone(), self.oracle_set(t))).collect()
    }

    /// One category per unordered pair with at least one non-neutral edge.
    pub fn categories(&self) -> Vec<PairCategory> {
        let n = self.tasks.len();
        let mut out = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let (ab, ba) = (self.edges[a][b], self.edges[b][a]);
                let (Some(ab), Some(ba)) = (ab, ba) else { continue };
                if let Some(category) = EdgeCategory::of(ab, ba) {
                    out.push(PairCategory {
                        first: self.tasks[a].clone(),
                        second: self.tasks[b].clone(),
                        first_on_second: ab,
                        second_on_first: ba,
                        category,
                    });
                }
            }
        }
        out
    }
}

/// How the two directed edges of a task pair combine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeCategory {
    /// Each task helps the other.
    MutualBenefit,
    /// Each task hurts the other.
    MutualHarm,
    /// One direction helps, the other hurts.
    Asymmetric,
    /// Exactly one direction is non-neutral.
    OneDirectional,
}

impl EdgeCategory {
    pub fn of(ab: Comparison, ba: Comparison) -> Option<EdgeCategory> {
        use Comparison::*;
        match (ab, ba) {
            (Higher, Higher) => Some(EdgeCategory::MutualBenefit),
            (Lower, Lower) => Some(EdgeCategory::MutualHarm),
            (Higher, Lower) | (Lower, Higher) => Some(EdgeCategory::Asymmetric),
            (Neutral, Neutral) => None,
            _ => Some(EdgeCategory::OneDirectional),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeCategory::MutualBenefit => "mutual-benefit",
            EdgeCategory::MutualHarm => "mutual-harm",
            EdgeCategory::Asymmetric => "asymmetric",
            EdgeCategory::OneDirectional => "one-directional",
        }
    }
}

impl fmt::Display for EdgeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairCategory {
    pub first: String,
    pub second: String,
    pub first_on_second: Comparison,
    pub second_on_first: Comparison,
    pub category: EdgeCategory,
}
