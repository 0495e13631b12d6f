use std::cell::Cell;

use tagmtl::protocol::{run, Job, Protocol, RunSpec};
use tagmtl::report::{pairwise_report, render_report};
use tagmtl::store::ResultsStore;
use tagmtl::table::Setting;
use tagmtl::Error;
use tagmtl_core::corpus::{Scheme, TaggedSentence, TaskData};
use tagmtl_core::metrics::Comparison;
use tagmtl_core::model::Mode;
use tagmtl_core::trainer::{EpochRecord, RunRecord};

fn tasks() -> Vec<TaskData> {
    ["a", "b", "c"]
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let s = vec![TaggedSentence::new(vec!["w".into()], vec!["X".into()], i).unwrap()];
            TaskData::from_sentences(i, *name, Scheme::TokenLevel, s.clone(), s.clone(), s).unwrap()
        })
        .collect()
}

/// Scores with known structure: b helps a, a hurts c, seeds add a little
/// spread.
fn score(task: &str, members: &[String], seed: u64) -> f64 {
    let has = |t: &str| members.iter().any(|m| m == t);
    let base = match task {
        "a" => 0.70,
        "b" => 0.80,
        _ => 0.60,
    };
    let effect = match task {
        "a" if has("b") => 0.05,
        "c" if has("a") => -0.05,
        _ => 0.0,
    };
    base + effect + 0.001 * seed as f64
}

fn fake_record(job: &Job) -> RunRecord {
    let names = job.task_names();
    let test_f1: Vec<f64> = names.iter().map(|t| score(t, &names, job.seed)).collect();
    RunRecord {
        tasks: names,
        mode: job.mode,
        seed: job.seed,
        epochs: vec![EpochRecord {
            epoch: 1,
            lr: 0.001,
            batch_losses: vec![1.0],
            mean_loss: 1.0,
            dev_f1: test_f1.clone(),
            criterion: test_f1.iter().sum::<f64>() / test_f1.len() as f64,
            improved: true,
        }],
        best_epoch: 1,
        best_criterion: 0.0,
        test_f1,
        wall_time_s: 0.0,
    }
}

fn spec(protocol: Protocol, force: bool) -> RunSpec {
    RunSpec {
        protocol,
        method: if protocol == Protocol::Stl {
            Mode::Stl
        } else {
            Mode::TeDec
        },
        seeds: vec![1, 2, 3],
        force,
        k: 1.5,
    }
}

#[test]
fn full_sweep_resume_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = tasks();
    let mut store = ResultsStore::open(dir.path()).unwrap();
    let calls = Cell::new(0);
    let mut trainer = |job: &Job| {
        calls.set(calls.get() + 1);
        Ok(fake_record(job))
    };

    // the oracle protocol needs a complete pairwise matrix first
    match run(&spec(Protocol::Oracle, false), &data, &mut store, "h", &mut trainer) {
        Err(Error::MissingPrerequisites(gaps)) => assert!(gaps.iter().any(|g| g.contains("stl a")), "{gaps:?}"),
        other => panic!("expected missing prerequisites, got {other:?}"),
    }

    for (protocol, configs) in [
        (Protocol::Stl, 3),
        (Protocol::Pairwise, 3),
        (Protocol::All, 1),
        (Protocol::AllButOne, 3),
    ] {
        calls.set(0);
        run(&spec(protocol, false), &data, &mut store, "h", &mut trainer).unwrap();
        assert_eq!(calls.get(), configs * 3, "{protocol}");
    }

    // rerunning with the same hash resumes: nothing is retrained
    calls.set(0);
    let added = run(&spec(Protocol::Pairwise, false), &data, &mut store, "h", &mut trainer).unwrap();
    assert!(added.is_empty());
    assert_eq!(calls.get(), 0);

    // only a has a beneficial helper, so the oracle protocol trains a+b once per seed
    calls.set(0);
    let added = run(&spec(Protocol::Oracle, false), &data, &mut store, "h", &mut trainer).unwrap();
    assert_eq!(calls.get(), 3);
    assert!(added.iter().all(|r| r.tasks == ["a", "b"] && r.test_task == "a"));

    let table = ResultsStore::read(dir.path()).unwrap().table().unwrap();
    let report = pairwise_report(&table, "te-dec", 1.5);
    assert_eq!(report.edges.edge("b", "a"), Some(Comparison::Higher));
    assert_eq!(report.edges.edge("a", "c"), Some(Comparison::Lower));
    assert_eq!(report.edges.edge("c", "b"), Some(Comparison::Neutral));
    assert_eq!(report.edges.oracle_set("a"), ["b"]);
    // tasks without beneficial helpers fall back to their single-task score
    let stl_b = table.get("te-dec", "b", &Setting::Stl).unwrap().mean;
    assert_eq!(report.cell("oracle", "b").unwrap().value, stl_b);
    assert_eq!(report.cell("oracle", "a").unwrap().mark, Some(Comparison::Higher));
    // leaving b out of All costs a its benefit
    let abo = table.get("te-dec", "a", &Setting::AllBut("b".into())).unwrap();
    let all = table.get("te-dec", "a", &Setting::All).unwrap();
    assert!((all.mean - abo.mean - 5.0).abs() < 1e-9);

    let out = dir.path().join("report");
    let summary = render_report(&table, &out, 1.5).unwrap();
    assert!(summary.warnings.is_empty(), "{:?}", summary.warnings);
    for name in [
        "pairwise_te-dec.tsv",
        "relation_edges.tsv",
        "edge_categories.tsv",
        "all_but_one_te-dec.tsv",
    ] {
        assert!(out.join(name).is_file(), "{name}");
    }
}

#[test]
fn changed_configuration_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let data = tasks();
    let mut store = ResultsStore::open(dir.path()).unwrap();
    let mut trainer = |job: &Job| Ok(fake_record(job));
    run(&spec(Protocol::Stl, false), &data, &mut store, "old", &mut trainer).unwrap();

    let err = run(&spec(Protocol::Stl, false), &data, &mut store, "new", &mut trainer).unwrap_err();
    assert!(matches!(err, Error::DuplicateKey { .. }), "{err}");

    let added = run(&spec(Protocol::Stl, true), &data, &mut store, "new", &mut trainer).unwrap();
    assert_eq!(added.len(), 9);
    let reread = ResultsStore::read(dir.path()).unwrap();
    assert!(reread.records().iter().all(|r| r.config_hash == "new"));
}

#[test]
fn multi_task_protocols_reject_single_task_method() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ResultsStore::open(dir.path()).unwrap();
    let bad = RunSpec {
        method: Mode::Stl,
        ..spec(Protocol::Pairwise, false)
    };
    let err = run(&bad, &tasks(), &mut store, "h", &mut |job: &Job| Ok(fake_record(job))).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}
