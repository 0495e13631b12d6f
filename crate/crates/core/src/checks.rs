//! Self-check suites comparing the implementation against the naive
//! references in [`crate::oracle`]. Each suite returns named pass/fail
//! outcomes with a human-readable detail line.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Scheme, TaggedSentence, TaskData};
use crate::decoder::{crf_log_partition, viterbi};
use crate::encoder::EncoderDims;
use crate::error::Result;
use crate::gradcheck::{finite_difference_check, GradCheckReport};
use crate::metrics::{extract_spans, micro_f1, tag_f1, Span};
use crate::model::{Mode, Model, ModelConfig};
use crate::oracle::{brute_argmax, brute_log_partition, iob2_spans, token_counts};
use crate::tensor::Tensor;
use crate::trainer::balanced_batches;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        CheckOutcome {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Crf,
    Grad,
    F1,
    Batching,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Crf, Suite::Grad, Suite::F1, Suite::Batching];

    pub fn parse(s: &str) -> Option<Suite> {
        match s {
            "crf" => Some(Suite::Crf),
            "grad" => Some(Suite::Grad),
            "f1" => Some(Suite::F1),
            "batching" => Some(Suite::Batching),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Crf => "crf",
            Suite::Grad => "grad",
            Suite::F1 => "f1",
            Suite::Batching => "batching",
        }
    }

    pub fn run(&self) -> Result<Vec<CheckOutcome>> {
        match self {
            Suite::Crf => crf_suite(200, 0),
            Suite::Grad => grad_suite(),
            Suite::F1 => f1_suite(),
            Suite::Batching => batching_suite(200, 0),
        }
    }
}

/// Random CRF instance: `len × k` emissions and a `(k+2)²` transition
/// matrix, both uniform in `[−2, 2]`, with the structural `−inf` entries
/// (nothing enters START, nothing leaves STOP).
pub fn random_crf_instance<R: Rng + ?Sized>(len: usize, k: usize, rng: &mut R) -> (Tensor, Tensor) {
    let e: Vec<f64> = (0..len * k).map(|_| rng.gen_range(-2.0..=2.0)).collect();
    let n = k + 2;
    let mut t = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = if j == k || i == k + 1 {
                f64::NEG_INFINITY
            } else {
                rng.gen_range(-2.0..=2.0)
            };
            t.set(i, j, v);
        }
    }
    (Tensor::matrix(len, k, e).expect("sized"), t)
}

/// Partition function and Viterbi against exhaustive enumeration on
/// `instances` random problems with length ≤ 5 and ≤ 4 labels.
pub fn crf_suite(instances: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut argmax_ok = 0;
    for _ in 0..instances {
        let len = rng.gen_range(1..=5);
        let k = rng.gen_range(1..=4);
        let (e, t) = random_crf_instance(len, k, &mut rng);
        worst = worst.max((crf_log_partition(&e, &t)? - brute_log_partition(&e, &t, None)).abs());
        argmax_ok += usize::from(viterbi(&e, &t, None)? == brute_argmax(&e, &t, None));
    }
    Ok(vec![
        CheckOutcome::new(
            "log-partition vs enumeration",
            worst <= 1e-9,
            format!("max |Δ| = {worst:.3e} over {instances} instances (tolerance 1e-9)"),
        ),
        CheckOutcome::new(
            "viterbi vs exhaustive argmax",
            argmax_ok == instances,
            format!("{argmax_ok}/{instances} exact matches"),
        ),
    ])
}

/// Dimensions for gradient checking: small enough to perturb every scalar.
pub fn toy_config() -> ModelConfig {
    ModelConfig {
        encoder: EncoderDims {
            char_emb: 3,
            char_hidden: 2,
            word_emb: 4,
            word_hidden: 5,
        },
        task_emb: 3,
    }
}

fn sentence(tokens: &str, tags: &str) -> TaggedSentence {
    TaggedSentence::new(
        tokens.split_whitespace().map(str::to_string).collect(),
        tags.split_whitespace().map(str::to_string).collect(),
        0,
    )
    .expect("hand-written sentence")
}

/// Two hand-written token-level tasks with three labels each.
pub fn toy_tasks() -> Vec<TaskData> {
    let pos = vec![
        sentence("the cat sat", "DET NOUN VERB"),
        sentence("a dog ran home", "DET NOUN VERB NOUN"),
    ];
    let role = vec![
        sentence("she saw the cat", "AGT ACT PAT PAT"),
        sentence("dogs ran", "AGT ACT"),
    ];
    let task = |id, name: &str, s: Vec<TaggedSentence>| {
        TaskData::from_sentences(id, name, Scheme::TokenLevel, s.clone(), s.clone(), s).expect("valid fixture")
    };
    vec![task(0, "pos", pos), task(1, "role", role)]
}

/// Central-difference check of the combined loss (mean sentence NLL over
/// every toy training sentence plus the transition penalty), dropout off.
pub fn gradient_check(mode: Mode, seed: u64, epsilon: f64) -> Result<GradCheckReport> {
    let data = toy_tasks();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (model, _) = Model::for_tasks(mode, toy_config(), &data, None, &mut rng)?;
    let batch: Vec<(usize, &TaggedSentence)> = data
        .iter()
        .enumerate()
        .flat_map(|(t, d)| d.train.iter().map(move |s| (t, s)))
        .collect();
    let mut store = model.params.clone();
    finite_difference_check(&mut store, epsilon, |tape| model.batch_loss(tape, &batch, None))
}

fn grad_suite() -> Result<Vec<CheckOutcome>> {
    let (eps, rtol, atol) = (1e-5, 1e-4, 1e-9);
    Mode::MTL
        .iter()
        .map(|&mode| {
            let report = gradient_check(mode, 1, eps)?;
            let bad = report.entries.iter().filter(|e| !e.within(rtol, atol)).count();
            Ok(CheckOutcome::new(
                format!("{mode} combined-loss gradients"),
                bad == 0,
                format!(
                    "{} entries, {bad} outside rtol {rtol:e} + atol {atol:e}; max relative error {:.2e}",
                    report.entries_checked, report.max_relative_error
                ),
            ))
        })
        .collect()
}

fn random_iob2<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<String> {
    let types = ["NP", "VP", "PP"];
    let mut tags: Vec<String> = Vec::with_capacity(len);
    for _ in 0..len {
        let open = tags.last().and_then(|t| t.get(2..)).map(str::to_string);
        let tag = match (rng.gen_range(0..3), open) {
            (0, _) => "O".to_string(),
            (1, Some(ty)) => format!("I-{ty}"),
            _ => format!("B-{}", types.choose(rng).expect("non-empty")),
        };
        tags.push(tag);
    }
    tags
}

fn f1_suite() -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();

    let gold = vec![vec![Span::new(0, 2, "NP")]];
    let pred = vec![vec![Span::new(0, 2, "NP"), Span::new(3, 3, "VP")]];
    let f = micro_f1(&gold, &pred)?.f1;
    out.push(CheckOutcome::new(
        "one extra predicted span",
        f == 2.0 / 3.0,
        format!("F1 = {f} (expected 2/3)"),
    ));

    let tags = vec![vec!["S-A", "O", "B-B", "I-B", "E-B"]];
    let f = tag_f1(&tags, &tags, Scheme::SpanPrefixed)?.f1;
    out.push(CheckOutcome::new("perfect prediction", f == 1.0, format!("F1 = {f}")));

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut agree = 0;
    let trials = 500;
    for _ in 0..trials {
        let tags = random_iob2(rng.gen_range(1..=10), &mut rng);
        let refs: Vec<&str> = tags.iter().map(String::as_str).collect();
        agree += usize::from(extract_spans(&tags, Scheme::SpanPrefixed) == iob2_spans(&refs));
    }
    out.push(CheckOutcome::new(
        "IOB2 chunks vs pairwise reader",
        agree == trials,
        format!("{agree}/{trials} random sequences agree"),
    ));

    let labels = ["O", "X", "Y"];
    let mut agree = 0;
    for _ in 0..trials {
        let len = rng.gen_range(1..=8);
        let draw =
            |rng: &mut ChaCha8Rng| -> Vec<&str> { (0..len).map(|_| *labels.choose(rng).expect("labels")).collect() };
        let (g, p) = (vec![draw(&mut rng)], vec![draw(&mut rng)]);
        let (tp, ng, np) = token_counts(&g, &p);
        let s = tag_f1(&g, &p, Scheme::TokenLevel)?;
        agree += usize::from((s.true_positives, s.gold, s.predicted) == (tp, ng, np));
    }
    out.push(CheckOutcome::new(
        "token-level counts vs per-token reference",
        agree == trials,
        format!("{agree}/{trials} random pairs agree"),
    ));
    Ok(out)
}

/// Balanced-batch invariants over random task counts, sizes and seeds.
pub fn batching_suite(cases: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut balanced, mut unique, mut exhausted) = (0, 0, 0);
    for _ in 0..cases {
        let t = rng.gen_range(1..=11);
        let sizes: Vec<usize> = (0..t).map(|_| rng.gen_range(5..=500)).collect();
        let batch = rng.gen_range(t.max(11)..=64);
        let batches = balanced_batches(&sizes, batch, &mut rng)?;
        let mut used = vec![0usize; t];
        let mut seen = std::collections::HashSet::new();
        let mut ok_balance = true;
        let mut ok_unique = true;
        for b in &batches {
            let mut c = vec![0usize; t];
            for &(task, i) in b {
                c[task] += 1;
                used[task] += 1;
                ok_unique &= seen.insert((task, i));
            }
            ok_balance &= b.len() <= batch && c.iter().max().unwrap_or(&0) - c.iter().min().unwrap_or(&0) <= 1;
        }
        balanced += usize::from(ok_balance);
        unique += usize::from(ok_unique);
        let smallest = *sizes.iter().min().expect("t ≥ 1");
        exhausted += usize::from((0..t).any(|i| sizes[i] == smallest && used[i] == smallest));
    }
    Ok(vec![
        CheckOutcome::new(
            "per-task counts differ by ≤ 1",
            balanced == cases,
            format!("{balanced}/{cases} epochs"),
        ),
        CheckOutcome::new(
            "no repeated example within an epoch",
            unique == cases,
            format!("{unique}/{cases} epochs"),
        ),
        CheckOutcome::new(
            "epoch ends at smallest-pool exhaustion",
            exhausted == cases,
            format!("{exhausted}/{cases} epochs"),
        ),
    ])
}
