//! Report tables rendered from a [`ScoreTable`].
//!
//! Files written by [`render_report`]:
//!
//! * `pairwise_<method>.tsv` — single-task baseline row, one row per
//!   helper with ↑/↓ markers and row tallies, then column tallies and the
//!   Average, All and Oracle rows.
//! * `relative_improvement.tsv` / `.dat` — per method and test task, the
//!   improvement over the single-task baseline (percent of baseline) of the
//!   worst and best pair, All and Oracle.
//! * `relation_edges.tsv` — every directed helper → test edge.
//! * `edge_categories.tsv` — task pairs with at least one non-neutral edge.
//! * `all_but_one_<method>.tsv` — change versus All when one task is left
//!   out, with ↑/↓ markers from the same comparison rule.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use tagmtl_core::metrics::{compare, Comparison, ScoreStats};

use crate::error::{Error, Result};
use crate::relations::{classify_relations, PairwiseMatrix, RelationEdges};
use crate::table::{ScoreTable, Setting};

pub fn marker(c: Comparison) -> &'static str {
    match c {
        Comparison::Higher => "↑",
        Comparison::Lower => "↓",
        Comparison::Neutral => "",
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub value: f64,
    /// Comparison against the baseline; `None` for the baseline itself.
    pub mark: Option<Comparison>,
}

impl Cell {
    fn render(&self) -> String {
        format!("{:.2}{}", self.value, self.mark.map_or("", marker))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub cells: Vec<Option<Cell>>,
    /// Row tallies (helper rows only).
    pub tally: Option<(usize, usize)>,
}

/// The pairwise table of one method.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseReport {
    pub method: String,
    pub tasks: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub edges: RelationEdges,
    pub warnings: Vec<String>,
}

impl PairwiseReport {
    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn cell(&self, row: &str, test: &str) -> Option<&Cell> {
        let t = self.tasks.iter().position(|x| x == test)?;
        self.row(row)?.cells[t].as_ref()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("setting");
        for t in &self.tasks {
            out.push('\t');
            out.push_str(t);
        }
        out.push_str("\t#↑\t#↓\n");
        for row in &self.rows {
            out.push_str(&row.label);
            for c in &row.cells {
                out.push('\t');
                match c {
                    // tally rows hold counts
                    Some(c) if row.label.starts_with('#') => {
                        let _ = write!(out, "{}", c.value);
                    }
                    Some(c) => out.push_str(&c.render()),
                    None => {}
                }
            }
            match row.tally {
                Some((u, d)) => {
                    let _ = writeln!(out, "\t{u}\t{d}");
                }
                None => out.push_str("\t\t\n"),
            }
        }
        out
    }
}

fn marked(value: ScoreStats, baseline: Option<ScoreStats>, k: f64) -> Cell {
    Cell {
        value: value.mean,
        mark: baseline.map(|b| compare(value, b, k)),
    }
}

/// Build the pairwise table of `method`. Missing cells are left blank and
/// reported in `warnings`. The Oracle row shows the single-task value for
/// tasks without beneficial helpers.
pub fn pairwise_report(table: &ScoreTable, method: &str, k: f64) -> PairwiseReport {
    let tasks = table.tasks.clone();
    let matrix = PairwiseMatrix::from_table(table, method, &tasks);
    let edges = classify_relations(&matrix, k);
    let mut warnings: Vec<String> = matrix
        .missing()
        .into_iter()
        .map(|m| format!("{method}: missing {m}"))
        .collect();
    let stl: Vec<Option<ScoreStats>> = tasks.iter().map(|t| table.get(method, t, &Setting::Stl)).collect();

    let mut rows = vec![ReportRow {
        label: "stl".into(),
        cells: stl
            .iter()
            .map(|s| {
                s.map(|s| Cell {
                    value: s.mean,
                    mark: None,
                })
            })
            .collect(),
        tally: None,
    }];
    for (s, helper) in tasks.iter().enumerate() {
        let cells = (0..tasks.len())
            .map(|t| {
                let stats = matrix.cells[s][t]?;
                Some(Cell {
                    value: stats.mean,
                    mark: edges.edges[s][t],
                })
            })
            .collect();
        rows.push(ReportRow {
            label: format!("+{helper}"),
            cells,
            tally: Some((edges.row_up[s], edges.row_down[s])),
        });
    }
    let count_row = |label: &str, counts: &[usize]| ReportRow {
        label: label.into(),
        cells: counts
            .iter()
            .map(|&c| {
                Some(Cell {
                    value: c as f64,
                    mark: None,
                })
            })
            .collect(),
        tally: None,
    };
    rows.push(count_row("#↑", &edges.col_up));
    rows.push(count_row("#↓", &edges.col_down));

    let average = (0..tasks.len())
        .map(|t| {
            let means: Vec<f64> = (0..tasks.len())
                .filter(|&s| s != t)
                .filter_map(|s| matrix.cells[s][t].map(|c| c.mean))
                .collect();
            (!means.is_empty()).then(|| Cell {
                value: means.iter().sum::<f64>() / means.len() as f64,
                mark: None,
            })
        })
        .collect();
    rows.push(ReportRow {
        label: "average".into(),
        cells: average,
        tally: None,
    });

    let all = tasks
        .iter()
        .zip(&stl)
        .map(|(t, base)| table.get(method, t, &Setting::All).map(|v| marked(v, *base, k)))
        .collect();
    rows.push(ReportRow {
        label: "all".into(),
        cells: all,
        tally: None,
    });

    let mut oracle = Vec::new();
    for (t, (name, base)) in tasks.iter().zip(&stl).enumerate() {
        let column_complete = (0..tasks.len()).all(|s| matrix.cells[s][t].is_some());
        let cell = if column_complete && edges.oracle_set(name).is_empty() {
            base.map(|b| Cell {
                value: b.mean,
                mark: None,
            })
        } else {
            table.get(method, name, &Setting::Oracle).map(|v| marked(v, *base, k))
        };
        if cell.is_none() {
            warnings.push(format!("{method}: missing oracle result for {name}"));
        }
        oracle.push(cell);
    }
    rows.push(ReportRow {
        label: "oracle".into(),
        cells: oracle,
        tally: None,
    });

    PairwiseReport {
        method: method.to_string(),
        tasks,
        rows,
        edges,
        warnings,
    }
}

/// Improvement over the single-task baseline, in percent of the baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct Improvement {
    pub method: String,
    pub test_task: String,
    pub stl: f64,
    pub pair_min: Option<f64>,
    pub pair_max: Option<f64>,
    pub all: Option<f64>,
    pub oracle: Option<f64>,
}

pub fn relative_improvements(report: &PairwiseReport) -> Vec<Improvement> {
    let rel = |x: f64, base: f64| 100.0 * (x - base) / base;
    let value = |label: &str, t: usize| report.row(label).and_then(|r| r.cells[t].as_ref()).map(|c| c.value);
    report
        .tasks
        .iter()
        .enumerate()
        .filter_map(|(t, name)| {
            let base = value("stl", t)?;
            let pairs: Vec<f64> = report
                .tasks
                .iter()
                .filter(|h| *h != name)
                .filter_map(|h| value(&format!("+{h}"), t))
                .map(|v| rel(v, base))
                .collect();
            Some(Improvement {
                method: report.method.clone(),
                test_task: name.clone(),
                stl: base,
                pair_min: pairs.iter().copied().reduce(f64::min),
                pair_max: pairs.iter().copied().reduce(f64::max),
                all: value("all", t).map(|v| rel(v, base)),
                oracle: value("oracle", t).map(|v| rel(v, base)),
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.4}"))
}

/// All-but-one table of `method`: the All row, then one row per left-out
/// task holding `μ(all − s, t) − μ(all, t)` marked against All.
pub fn all_but_one_tsv(table: &ScoreTable, method: &str, k: f64) -> String {
    let tasks = &table.tasks;
    let mut out = String::from("left_out");
    for t in tasks {
        out.push('\t');
        out.push_str(t);
    }
    out.push('\n');
    out.push_str("all");
    for t in tasks {
        out.push('\t');
        if let Some(a) = table.get(method, t, &Setting::All) {
            let _ = write!(out, "{:.2}", a.mean);
        }
    }
    out.push('\n');
    for left_out in tasks {
        out.push_str(left_out);
        for t in tasks {
            out.push('\t');
            let all = table.get(method, t, &Setting::All);
            let abo = table.get(method, t, &Setting::AllBut(left_out.clone()));
            if let (Some(all), Some(abo), false) = (all, abo, t == left_out) {
                let _ = write!(out, "{:+.2}{}", abo.mean - all.mean, marker(compare(abo, all, k)));
            }
        }
        out.push('\n');
    }
    out
}

fn relation_name(c: Comparison) -> &'static str {
    match c {
        Comparison::Higher => "beneficial",
        Comparison::Lower => "harmful",
        Comparison::Neutral => "neutral",
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportSummary {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Write every report file for every method in `table` into `out`.
pub fn render_report(table: &ScoreTable, out: &Path, k: f64) -> Result<ReportSummary> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut summary = ReportSummary::default();
    let write = |name: String, text: String, summary: &mut ReportSummary| -> Result<()> {
        let path = out.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        summary.files.push(path);
        Ok(())
    };

    let mut methods = table.methods();
    if methods.is_empty() {
        // single-task results only: still emit the baseline table
        methods.push("stl".into());
    }
    let mut improvements = Vec::new();
    let mut edges_tsv = String::from("method\thelper\ttest\trelation\n");
    let mut categories_tsv = String::from("method\tfirst\tsecond\tfirst_on_second\tsecond_on_first\tcategory\n");
    for method in &methods {
        let report = pairwise_report(table, method, k);
        for w in &report.warnings {
            log::warn!("{w}");
        }
        summary.warnings.extend(report.warnings.iter().cloned());
        write(format!("pairwise_{method}.tsv"), report.to_tsv(), &mut summary)?;
        improvements.extend(relative_improvements(&report));
        for (s, helper) in report.tasks.iter().enumerate() {
            for (t, test) in report.tasks.iter().enumerate() {
                if let Some(c) = report.edges.edges[s][t] {
                    let _ = writeln!(edges_tsv, "{method}\t{helper}\t{test}\t{}", relation_name(c));
                }
            }
        }
        for c in report.edges.categories() {
            let _ = writeln!(
                categories_tsv,
                "{method}\t{}\t{}\t{}\t{}\t{}",
                c.first,
                c.second,
                relation_name(c.first_on_second),
                relation_name(c.second_on_first),
                c.category
            );
        }
        if table
            .cells
            .keys()
            .any(|(m, _, s)| m == method && matches!(s, Setting::AllBut(_)))
        {
            write(
                format!("all_but_one_{method}.tsv"),
                all_but_one_tsv(table, method, k),
                &mut summary,
            )?;
        }
    }

    let mut tsv = String::from("method\ttest_task\tstl_f1\tpair_min_pct\tpair_max_pct\tall_pct\toracle_pct\n");
    let mut dat =
        String::from("# method test_task stl_f1 pair_min_pct pair_max_pct all_pct oracle_pct (nan = missing)\n");
    for i in &improvements {
        let _ = writeln!(
            tsv,
            "{}\t{}\t{:.2}\t{}\t{}\t{}\t{}",
            i.method,
            i.test_task,
            i.stl,
            opt(i.pair_min),
            opt(i.pair_max),
            opt(i.all),
            opt(i.oracle)
        );
        let d = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:.4}"));
        let _ = writeln!(
            dat,
            "{} {} {:.2} {} {} {} {}",
            i.method,
            i.test_task,
            i.stl,
            d(i.pair_min),
            d(i.pair_max),
            d(i.all),
            d(i.oracle)
        );
    }
    write("relative_improvement.tsv".into(), tsv, &mut summary)?;
    write("relative_improvement.dat".into(), dat, &mut summary)?;
    write("relation_edges.tsv".into(), edges_tsv, &mut summary)?;
    write("edge_categories.tsv".into(), categories_tsv, &mut summary)?;
    Ok(summary)
}
