//! Joint training: balanced batches, combined loss, clipped Adam steps,
//! learning-rate halving, early stopping and best-epoch restoration.

mod batching;
mod checkpoint;
mod optim;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use batching::{balanced_batches, batch_shares, BatchPlan};
pub use checkpoint::{Checkpoint, RngState, CHECKPOINT_FORMAT};
pub use optim::{clip_global_norm, Adam};

use crate::corpus::{Split, TaggedSentence, TaskData};
use crate::encoder::Dropout;
use crate::error::{Error, Result};
use crate::metrics::{tag_f1, F1Score};
use crate::model::{Mode, Model};
use crate::params::ParamStore;
use crate::tape::Tape;

/// Stream of the training rng; model initialization uses stream 0 of the
/// same seed, so the two never share a keystream.
pub const TRAIN_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
    pub lr_patience: usize,
    pub stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub char_dropout: f64,
    pub word_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
            lr_patience: 2,
            stop_patience: 10,
            max_epochs: 100,
            seed: 1,
            char_dropout: 0.25,
            word_dropout: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &str, x: f64| {
            if x > 0.0 && x < 1.0 {
                Ok(())
            } else {
                Err(Error::contract(format!("{name} must lie in (0, 1), got {x}")))
            }
        };
        open_unit("beta1", self.beta1)?;
        open_unit("beta2", self.beta2)?;
        open_unit("char_dropout", self.char_dropout)?;
        open_unit("word_dropout", self.word_dropout)?;
        if !(self.lr > 0.0 && self.eps > 0.0 && self.clip_norm > 0.0) {
            return Err(Error::contract("lr, eps and clip_norm must be positive"));
        }
        if self.batch_size == 0 || self.lr_patience == 0 || self.stop_patience == 0 || self.max_epochs == 0 {
            return Err(Error::contract(
                "batch size, patience values and max_epochs must be positive",
            ));
        }
        Ok(())
    }
}

/// What happened in one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub batch_losses: Vec<f64>,
    pub mean_loss: f64,
    /// Dev F1 per task, in model task order.
    pub dev_f1: Vec<f64>,
    /// Unweighted mean of `dev_f1`.
    pub criterion: f64,
    pub improved: bool,
}

/// One training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tasks: Vec<String>,
    pub mode: Mode,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub best_criterion: f64,
    /// Test F1 per task with the restored parameters.
    pub test_f1: Vec<f64>,
    pub wall_time_s: f64,
}

impl RunRecord {
    pub fn dev_f1_history(&self) -> Vec<Vec<f64>> {
        self.epochs.iter().map(|e| e.dev_f1.clone()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub record: RunRecord,
    pub optimizer: Adam,
    pub rng: ChaCha8Rng,
}

/// Micro-F1 of `model` on one split of every task, in model task order.
pub fn evaluate(model: &Model, data: &[TaskData], split: Split) -> Result<Vec<F1Score>> {
    check_alignment(model, data)?;
    data.iter()
        .enumerate()
        .map(|(task, d)| {
            let sentences = d.split(split);
            let gold: Vec<Vec<String>> = sentences.iter().map(|s| s.tags.clone()).collect();
            let pred = sentences
                .iter()
                .map(|s| model.predict(&s.tokens, task))
                .collect::<Result<Vec<_>>>()?;
            tag_f1(&gold, &pred, model.tasks[task].scheme)
        })
        .collect()
}

fn check_alignment(model: &Model, data: &[TaskData]) -> Result<()> {
    if model.tasks.len() != data.len() {
        return Err(Error::contract(format!(
            "model has {} tasks but {} datasets were given",
            model.tasks.len(),
            data.len()
        )));
    }
    for (info, d) in model.tasks.iter().zip(data) {
        if info.name != d.spec.name {
            return Err(Error::contract(format!(
                "dataset {} does not match model task {}",
                d.spec.name, info.name
            )));
        }
    }
    Ok(())
}

/// One optimizer step on a batch; returns the batch loss.
fn train_step(
    model: &mut Model,
    batch: &[(usize, &TaggedSentence)],
    optimizer: &mut Adam,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let (loss, mut grads) = {
        let mut tape = Tape::new(&model.params);
        let mut dropout = Dropout {
            rng,
            char_rate: config.char_dropout,
            word_rate: config.word_dropout,
        };
        let root = model.batch_loss(&mut tape, batch, Some(&mut dropout))?;
        let loss = tape.value(root).item();
        if !loss.is_finite() {
            return Err(Error::NonFinite { op: "batch loss" });
        }
        (loss, tape.backward(root)?)
    };
    clip_global_norm(&mut grads, config.clip_norm);
    optimizer.update(&mut model.params, &grads);
    Ok(loss)
}

/// The patience counter only resets on improvement, so each stretch without
/// improvement halves the learning rate exactly once, when it reaches
/// `lr_patience` epochs.
fn halves_lr(since_improvement: usize, lr_patience: usize) -> bool {
    since_improvement == lr_patience
}

/// Train `model` jointly on `data` (one dataset per model task, same
/// order). Calls `on_epoch` after each epoch's dev evaluation. On return
/// the model holds the parameters of the best epoch.
pub fn train(
    model: &mut Model,
    data: &[TaskData],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutput> {
    config.validate()?;
    check_alignment(model, data)?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(TRAIN_STREAM);
    let mut optimizer = Adam::new(&model.params, config.lr, config.beta1, config.beta2, config.eps);
    let sizes: Vec<usize> = data.iter().map(|d| d.train.len()).collect();

    let mut epochs: Vec<EpochRecord> = Vec::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut since_improvement = 0usize;

    for epoch in 1..=config.max_epochs {
        let plans = balanced_batches(&sizes, config.batch_size, &mut rng)?;
        let mut batch_losses = Vec::with_capacity(plans.len());
        for (b, plan) in plans.iter().enumerate() {
            let batch: Vec<(usize, &TaggedSentence)> = plan.iter().map(|&(t, i)| (t, &data[t].train[i])).collect();
            let loss = train_step(model, &batch, &mut optimizer, config, &mut rng).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Diverged {
                    epoch,
                    batch: b,
                    detail: e.to_string(),
                },
                other => other,
            })?;
            batch_losses.push(loss);
        }
        let dev_f1: Vec<f64> = evaluate(model, data, Split::Dev)?.into_iter().map(|s| s.f1).collect();
        let criterion = dev_f1.iter().sum::<f64>() / dev_f1.len() as f64;
        let best_so_far = best.as_ref().map(|b| b.0);
        let improved = best_so_far.is_none_or(|b| criterion > b);
        if improved || best_so_far == Some(criterion) {
            best = Some((criterion, epoch, model.params.clone()));
        }
        let record = EpochRecord {
            epoch,
            lr: optimizer.lr,
            mean_loss: batch_losses.iter().sum::<f64>() / batch_losses.len() as f64,
            batch_losses,
            dev_f1,
            criterion,
            improved,
        };
        log::info!(
            "epoch {epoch}: loss {:.4}, dev criterion {:.4}{}",
            record.mean_loss,
            criterion,
            if improved { " (best)" } else { "" }
        );
        on_epoch(&record);
        epochs.push(record);

        if improved {
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= config.stop_patience {
                log::info!("no improvement for {since_improvement} epochs; stopping");
                break;
            }
            if halves_lr(since_improvement, config.lr_patience) {
                optimizer.lr /= 2.0;
                log::info!("halving learning rate to {}", optimizer.lr);
            }
        }
    }

    let (best_criterion, best_epoch, params) = best.expect("at least one epoch ran");
    model.params = params;
    let test_f1 = evaluate(model, data, Split::Test)?.into_iter().map(|s| s.f1).collect();
    let record = RunRecord {
        tasks: model.tasks.iter().map(|t| t.name.clone()).collect(),
        mode: model.mode,
        seed: config.seed,
        epochs,
        best_epoch,
        best_criterion,
        test_f1,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutput { record, optimizer, rng })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learning_rate_halves_once_per_stretch() {
        let halvings: Vec<usize> = (1..=9).filter(|&n| halves_lr(n, 2)).collect();
        assert_eq!(halvings, vec![2]);
        assert!(halves_lr(1, 1) && !halves_lr(2, 1));
    }
}
