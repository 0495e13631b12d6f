use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tagmtl::config::ExperimentConfig;
use tagmtl::corpus_stats::stats_tsv;
use tagmtl::export::export_task_embeddings;
use tagmtl::protocol::{run, CoreTrainer, Protocol, RunSpec};
use tagmtl::report::render_report;
use tagmtl::store::ResultsStore;
use tagmtl_core::checks::Suite;
use tagmtl_core::corpus::synthetic::{write_fixture, SyntheticSizes};
use tagmtl_core::corpus::{Registry, StatsOptions};
use tagmtl_core::metrics::DEFAULT_K;
use tagmtl_core::model::Mode;

#[derive(Parser)]
#[command(name = "tagmtl", version, about = "Multi-task sequence tagging experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configurations of one protocol and append results.
    Run {
        /// TOML file with defaults for every flag plus [model]/[train] sections.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Protocol>,
        #[arg(long)]
        method: Option<Mode>,
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Number of seeds; seeds 1..=N are used.
        #[arg(long)]
        seeds: Option<usize>,
        /// Results directory (results.jsonl and checkpoints/).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Pretrained word vectors (whitespace-separated text format).
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Override training epochs.
        #[arg(long)]
        max_epochs: Option<usize>,
        /// Retrain and supersede results that already exist.
        #[arg(long)]
        force: bool,
    },
    /// Render report tables from a results directory.
    Report {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Width of the μ ± kσ bands.
        #[arg(long, default_value_t = DEFAULT_K)]
        k: f64,
    },
    /// Write the task-embedding table of a te-dec checkpoint as TSV.
    ExportTaskEmb {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print corpus statistics for every task in a registry.
    Stats {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        entropy_base: f64,
        /// Count types over raw surface forms instead of lowercased tokens.
        #[arg(long)]
        case_sensitive: bool,
    },
    /// Run self-check suites against brute-force references.
    Check {
        /// crf, grad, f1, batching or all.
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Write the synthetic two-task corpus and its registry.
    GenFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run {
            config,
            mode,
            method,
            registry,
            seeds,
            out,
            embeddings,
            max_epochs,
            force,
        } => {
            let mut c = match &config {
                Some(path) => ExperimentConfig::load(path)?,
                None => ExperimentConfig::default(),
            };
            c.mode = mode.or(c.mode);
            c.method = method.or(c.method);
            c.registry = registry.or(c.registry);
            c.seeds = seeds.unwrap_or(c.seeds);
            c.out = out.or(c.out);
            c.embeddings = embeddings.or(c.embeddings);
            c.force |= force;
            if let Some(n) = max_epochs {
                c.train.max_epochs = n;
            }
            run_command(&c)?;
        }
        Command::Report { store, out, k } => {
            let table = ResultsStore::read(&store)
                .with_context(|| format!("reading results in {}", store.display()))?
                .table()?;
            let summary = render_report(&table, &out, k)?;
            for f in &summary.files {
                println!("{}", f.display());
            }
        }
        Command::ExportTaskEmb { checkpoint, out } => {
            let n = export_task_embeddings(&checkpoint, &out)?;
            println!("wrote {n} task embeddings to {}", out.display());
        }
        Command::Stats {
            registry,
            entropy_base,
            case_sensitive,
        } => {
            let data = Registry::load(&registry)?.load_data()?;
            let opts = StatsOptions {
                entropy_base,
                lowercase_types: !case_sensitive,
            };
            print!("{}", stats_tsv(&data, opts)?);
        }
        Command::Check { suite } => return check_command(&suite),
        Command::GenFixture { out, seed } => {
            let path = write_fixture(&out, seed, SyntheticSizes::default())?;
            println!("{}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_command(c: &ExperimentConfig) -> Result<()> {
    c.validate()?;
    let Some(protocol) = c.mode else {
        bail!("--mode is required")
    };
    let method = match (protocol, c.method) {
        (Protocol::Stl, m) => m.unwrap_or(Mode::Stl),
        (_, Some(m)) if m != Mode::Stl => m,
        _ => bail!("--method multi-dec|te-dec|te-enc is required for {protocol}"),
    };
    let Some(registry) = &c.registry else {
        bail!("--registry is required")
    };
    let Some(out) = &c.out else { bail!("--out is required") };
    let data = Registry::load(registry)?.load_data()?;
    let mut store = ResultsStore::open(out)?;
    let spec = RunSpec {
        protocol,
        method,
        seeds: c.seed_list(),
        force: c.force,
        k: c.k,
    };
    let trainer = CoreTrainer {
        model: c.model,
        train: c.train.clone(),
        embeddings: c.embeddings.clone(),
        checkpoint_dir: Some(out.join("checkpoints")),
    };
    let hash = c.hash()?;
    let added = run(&spec, &data, &mut store, &hash, &mut |job| trainer.train_job(job))?;
    println!("{} new results in {}", added.len(), store.path().display());
    for r in &added {
        println!(
            "{}\t{}\t{}\t{}\tseed {}\ttest F1 {:.4}",
            r.mode,
            r.method,
            r.tasks.join("+"),
            r.test_task,
            r.seed,
            r.test_f1
        );
    }
    Ok(())
}

fn check_command(name: &str) -> Result<ExitCode> {
    let suites: Vec<Suite> = if name == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![Suite::parse(name).with_context(|| format!("unknown suite {name:?}"))?]
    };
    let mut failed = 0;
    for suite in suites {
        for o in suite.run()? {
            println!(
                "{} {}: {} — {}",
                if o.passed { "PASS" } else { "FAIL" },
                suite.name(),
                o.name,
                o.detail
            );
            failed += usize::from(!o.passed);
        }
    }
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
