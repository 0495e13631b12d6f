use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tagmtl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tagmtl"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run tagmtl")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn check_runs_one_suite_and_rejects_unknown_names() {
    let o = tagmtl(&["check", "--suite", "f1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().all(|l| l.starts_with("PASS f1:")), "{text}");

    let o = tagmtl(&["check", "--suite", "nope"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown suite"));
}

#[test]
fn run_export_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = tagmtl(&["gen-fixture", "--out", arg(&data), "--seed", "3"]);
    assert!(o.status.success());
    let registry = data.join("registry.tsv");
    assert_eq!(stdout(&o).trim(), registry.display().to_string());

    let o = tagmtl(&["stats", "--registry", arg(&registry)]);
    assert!(o.status.success());
    let stats = stdout(&o);
    assert!(stats.starts_with("task\tsplit\tsentences"));
    assert!(
        stats.contains("initial\ttrain\t500\t") && stats.contains("parity\ttest\t100\t"),
        "{stats}"
    );

    let config = dir.path().join("tiny.toml");
    fs::write(
        &config,
        "registry = \"data/registry.tsv\"\nout = \"results\"\nseeds = 1\n\
         [model]\ntask_emb = 2\n\
         [model.encoder]\nchar_emb = 2\nchar_hidden = 2\nword_emb = 4\nword_hidden = 4\n\
         [train]\nmax_epochs = 1\n",
    )
    .unwrap();
    let results = dir.path().join("results");

    for (mode, method) in [("stl", None), ("pairwise", Some("te-dec"))] {
        let mut args = vec!["run", "--config", arg(&config), "--mode", mode];
        if let Some(m) = method {
            args.extend(["--method", m]);
        }
        let o = tagmtl(&args);
        assert!(o.status.success(), "{mode}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).starts_with("2 new results"), "{}", stdout(&o));
    }

    // the same sweep again resumes without training
    let o = tagmtl(&[
        "run",
        "--config",
        arg(&config),
        "--mode",
        "pairwise",
        "--method",
        "te-dec",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("0 new results"), "{}", stdout(&o));

    // a changed configuration is refused unless forced
    let o = tagmtl(&["run", "--config", arg(&config), "--mode", "stl", "--max-epochs", "2"]);
    assert!(!o.status.success());

    let checkpoint = results.join("checkpoints/pairwise_te-dec_initial+parity_seed1.json");
    let emb = dir.path().join("task_emb.tsv");
    let o = tagmtl(&["export-task-emb", "--checkpoint", arg(&checkpoint), "--out", arg(&emb)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<Vec<String>> = fs::read_to_string(&emb)
        .unwrap()
        .lines()
        .map(|l| l.split('\t').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "initial");
    assert!(rows
        .iter()
        .all(|r| r.len() == 3 && r[1..].iter().all(|v| v.parse::<f64>().is_ok())));

    let report = dir.path().join("report");
    let o = tagmtl(&["report", "--store", arg(&results), "--out", arg(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(report.join("pairwise_te-dec.tsv")).unwrap();
    let labels: Vec<&str> = table.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(
        labels,
        ["stl", "+initial", "+parity", "#↑", "#↓", "average", "all", "oracle"]
    );
}

#[test]
fn run_requires_a_mode() {
    let o = tagmtl(&["run", "--registry", "missing.tsv", "--out", "x"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--mode is required"));
}
