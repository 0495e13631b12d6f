use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tagmtl_core::corpus::synthetic::{generate, SyntheticSizes};
use tagmtl_core::corpus::{Split, TaskData};
use tagmtl_core::encoder::EncoderDims;
use tagmtl_core::model::{Mode, Model, ModelConfig};
use tagmtl_core::trainer::{evaluate, train, Checkpoint, TrainConfig};
use tagmtl_core::Error;

fn small_config() -> ModelConfig {
    ModelConfig {
        encoder: EncoderDims {
            char_emb: 4,
            char_hidden: 4,
            word_emb: 8,
            word_hidden: 8,
        },
        task_emb: 4,
    }
}

fn small_data() -> Vec<TaskData> {
    generate(
        3,
        SyntheticSizes {
            train: 40,
            dev: 10,
            test: 10,
        },
    )
    .unwrap()
}

fn fresh(mode: Mode, data: &[TaskData]) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    Model::for_tasks(mode, small_config(), data, None, &mut rng).unwrap().0
}

fn train_config() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        max_epochs: 3,
        seed: 9,
        ..TrainConfig::default()
    }
}

#[test]
fn identical_runs_have_identical_traces() {
    let data = small_data();
    let run = || {
        let mut model = fresh(Mode::TeDec, &data);
        let mut seen = Vec::new();
        let out = train(&mut model, &data, &train_config(), |e| seen.push(e.epoch)).unwrap();
        assert_eq!(seen, (1..=out.record.epochs.len()).collect::<Vec<_>>());
        out.record
    };
    let (a, b) = (run(), run());
    let bits = |r: &tagmtl_core::trainer::RunRecord| -> Vec<u64> {
        r.epochs
            .iter()
            .flat_map(|e| e.batch_losses.iter().map(|l| l.to_bits()))
            .collect()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.test_f1, b.test_f1);
    assert_eq!(a.best_epoch, b.best_epoch);
}

#[test]
fn restored_parameters_belong_to_the_best_epoch() {
    let data = small_data();
    let mut model = fresh(Mode::MultiDec, &data);
    let out = train(&mut model, &data, &train_config(), |_| {}).unwrap();
    let r = &out.record;
    let max = r.epochs.iter().map(|e| e.criterion).fold(f64::NEG_INFINITY, f64::max);
    let last_max = r.epochs.iter().rposition(|e| e.criterion == max).unwrap() + 1;
    assert_eq!(r.best_epoch, last_max);
    let dev: Vec<f64> = evaluate(&model, &data, Split::Dev)
        .unwrap()
        .iter()
        .map(|s| s.f1)
        .collect();
    assert_eq!(dev, r.epochs[r.best_epoch - 1].dev_f1);
}

#[test]
fn stl_criterion_is_the_task_f1() {
    let data = small_data();
    let one = vec![data[1].clone()];
    let mut model = fresh(Mode::Stl, &one);
    let out = train(&mut model, &one, &train_config(), |_| {}).unwrap();
    for e in &out.record.epochs {
        assert_eq!(e.criterion, e.dev_f1[0]);
    }
}

#[test]
fn checkpoint_roundtrip_predicts_identically() {
    let data = small_data();
    let mut model = fresh(Mode::TeEnc, &data);
    let out = train(&mut model, &data, &train_config(), |_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    Checkpoint::new(&model, Some(&out.optimizer), Some(&out.rng), Some(&out.record))
        .save(&path)
        .unwrap();
    let ck = Checkpoint::load(&path).unwrap();
    assert_eq!(ck.optimizer.as_ref(), Some(&out.optimizer));
    assert_eq!(ck.record.as_ref(), Some(&out.record));
    let restored = ck.into_model().unwrap();
    assert_eq!(restored.params, model.params);
    for s in &data[0].test {
        assert_eq!(
            restored.predict(&s.tokens, 0).unwrap(),
            model.predict(&s.tokens, 0).unwrap()
        );
    }
}

#[test]
fn non_finite_parameters_abort_with_the_batch() {
    let data = small_data();
    let mut model = fresh(Mode::MultiDec, &data);
    let id = model.params.id("encoder.word.emb").unwrap();
    model.params.get_mut(id).tensor.data_mut().fill(f64::NAN);
    let err = train(&mut model, &data, &train_config(), |_| {}).unwrap_err();
    assert!(matches!(err, Error::Diverged { epoch: 1, batch: 0, .. }), "{err}");
}

#[test]
fn mismatched_datasets_are_rejected() {
    let data = small_data();
    let mut model = fresh(Mode::MultiDec, &data);
    let swapped = vec![data[1].clone(), data[0].clone()];
    assert!(train(&mut model, &swapped, &train_config(), |_| {}).is_err());
    let bad = TrainConfig {
        word_dropout: 1.0,
        ..train_config()
    };
    assert!(train(&mut model, &data, &bad, |_| {}).is_err());
}
