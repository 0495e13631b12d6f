//! Model assembly for single-task and the three multi-task sharing modes.
//!
//! * `Stl` — one task, its own decoder.
//! * `MultiDec` — shared encoder, one decoder per task.
//! * `TeDec` — shared encoder and decoder; a learned task embedding is
//!   concatenated to every encoder output before projection.
//! * `TeEnc` — shared encoder and decoder; a `<<task>>` token is prepended
//!   to the input and its position dropped before projection.
//!
//! Shared decoders score over the task-qualified union of label sets and
//! restrict each task to its own labels at loss and decoding time.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::embeddings::{load_pretrained, CoverageReport};
use crate::corpus::{Scheme, TaggedSentence, TaskData, Vocabulary};
use crate::decoder::{viterbi, CrfDecoder, JointLabelSpace, TRANSITION_L2};
use crate::encoder::{Dropout, Encoder, EncoderDims, EncoderInput};
use crate::error::{Error, Result};
use crate::init::{init_parameter, InitKind};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Axis, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Stl,
    MultiDec,
    TeDec,
    TeEnc,
}

impl Mode {
    pub const MTL: [Mode; 3] = [Mode::MultiDec, Mode::TeDec, Mode::TeEnc];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Stl => "stl",
            Mode::MultiDec => "multi-dec",
            Mode::TeDec => "te-dec",
            Mode::TeEnc => "te-enc",
        }
    }

    pub fn shared_decoder(&self) -> bool {
        matches!(self, Mode::TeDec | Mode::TeEnc)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "stl" => Ok(Mode::Stl),
            "multi-dec" => Ok(Mode::MultiDec),
            "te-dec" => Ok(Mode::TeDec),
            "te-enc" => Ok(Mode::TeEnc),
            _ => Err(Error::contract(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderDims,
    pub task_emb: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderDims::default(),
            task_emb: 25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInfo {
    pub name: String,
    pub labels: Vec<String>,
    pub scheme: Scheme,
}

impl TaskInfo {
    pub fn from_data(data: &TaskData) -> TaskInfo {
        TaskInfo {
            name: data.spec.name.clone(),
            labels: data.spec.label_set.clone(),
            scheme: data.spec.scheme,
        }
    }
}

#[derive(Clone, Debug)]
enum Decoders {
    PerTask(Vec<CrfDecoder>),
    Shared(CrfDecoder, JointLabelSpace),
}

/// Everything needed to rebuild a model; this is what checkpoints store.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub mode: Mode,
    pub config: ModelConfig,
    pub tasks: Vec<TaskInfo>,
    pub vocab: Vocabulary,
    pub params: ParamStore,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub mode: Mode,
    pub config: ModelConfig,
    pub tasks: Vec<TaskInfo>,
    pub vocab: Vocabulary,
    pub params: ParamStore,
    encoder: Encoder,
    decoders: Decoders,
    task_table: Option<ParamId>,
    label_index: Vec<HashMap<String, usize>>,
}

fn validate(mode: Mode, tasks: &[TaskInfo], vocab: &Vocabulary) -> Result<()> {
    if tasks.is_empty() {
        return Err(Error::contract("a model needs at least one task"));
    }
    if mode == Mode::Stl && tasks.len() != 1 {
        return Err(Error::contract(format!(
            "stl needs exactly one task, got {}",
            tasks.len()
        )));
    }
    if vocab.has_task_tokens() != (mode == Mode::TeEnc) {
        return Err(Error::contract(
            "task tokens must be in the vocabulary iff the mode is te-enc",
        ));
    }
    for t in tasks {
        if t.labels.is_empty() {
            return Err(Error::contract(format!("task {} has no labels", t.name)));
        }
        if mode == Mode::TeEnc && vocab.task_token_id(&t.name).is_none() {
            return Err(Error::contract(format!("no task token for {}", t.name)));
        }
    }
    Ok(())
}

fn label_index(tasks: &[TaskInfo]) -> Vec<HashMap<String, usize>> {
    tasks
        .iter()
        .map(|t| t.labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect())
        .collect()
}

fn joint_space(tasks: &[TaskInfo]) -> JointLabelSpace {
    let pairs: Vec<(&str, Vec<String>)> = tasks.iter().map(|t| (t.name.as_str(), t.labels.clone())).collect();
    JointLabelSpace::new(&pairs)
}

impl Model {
    /// Register fresh parameters. `word_table` defaults to a random draw.
    pub fn new<R: Rng + ?Sized>(
        mode: Mode,
        config: ModelConfig,
        tasks: Vec<TaskInfo>,
        vocab: Vocabulary,
        word_table: Option<Tensor>,
        rng: &mut R,
    ) -> Result<Model> {
        validate(mode, &tasks, &vocab)?;
        let dims = config.encoder;
        let word_table = match word_table {
            Some(t) => t,
            None => init_parameter(vocab.num_words(), dims.word_emb, InitKind::UncoveredWordEmbedding, rng),
        };
        if word_table.rows() != vocab.num_words() {
            return Err(Error::contract(format!(
                "word table has {} rows for {} words",
                word_table.rows(),
                vocab.num_words()
            )));
        }
        let mut params = ParamStore::new();
        let encoder = Encoder::register(&mut params, dims, vocab.num_chars(), word_table, rng)?;
        let out = dims.output_dim();
        let decoders = if mode.shared_decoder() {
            let joint = joint_space(&tasks);
            let input = if mode == Mode::TeDec {
                out + config.task_emb
            } else {
                out
            };
            let dec = CrfDecoder::register(&mut params, "decoder.shared", input, joint.len(), rng)?;
            Decoders::Shared(dec, joint)
        } else {
            let decs = tasks
                .iter()
                .map(|t| CrfDecoder::register(&mut params, &format!("decoder.{}", t.name), out, t.labels.len(), rng))
                .collect::<Result<Vec<_>>>()?;
            Decoders::PerTask(decs)
        };
        let task_table = if mode == Mode::TeDec {
            let t = init_parameter(tasks.len(), config.task_emb, InitKind::TaskEmbedding, rng);
            Some(params.insert("task_embedding", t, true)?)
        } else {
            None
        };
        Ok(Model {
            mode,
            config,
            label_index: label_index(&tasks),
            tasks,
            vocab,
            params,
            encoder,
            decoders,
            task_table,
        })
    }

    /// Build a vocabulary from the training splits (plus task tokens for
    /// te-enc) and initialize a model, optionally from pretrained vectors.
    pub fn for_tasks<R: Rng + ?Sized>(
        mode: Mode,
        config: ModelConfig,
        data: &[TaskData],
        pretrained: Option<&Path>,
        rng: &mut R,
    ) -> Result<(Model, Option<CoverageReport>)> {
        let tasks: Vec<TaskInfo> = data.iter().map(TaskInfo::from_data).collect();
        let names: Vec<String> = tasks.iter().map(|t| t.name.clone()).collect();
        let vocab = Vocabulary::build(
            data.iter().flat_map(|d| d.train.iter()),
            (mode == Mode::TeEnc).then_some(names.as_slice()),
        );
        let (table, report) = match pretrained {
            Some(path) => {
                let (t, r) = load_pretrained(path, &vocab, config.encoder.word_emb, rng)?;
                (Some(t), Some(r))
            }
            None => (None, None),
        };
        Ok((Model::new(mode, config, tasks, vocab, table, rng)?, report))
    }

    pub fn from_snapshot(snapshot: ModelSnapshot) -> Result<Model> {
        let ModelSnapshot {
            mode,
            config,
            tasks,
            vocab,
            params,
        } = snapshot;
        validate(mode, &tasks, &vocab)?;
        let encoder = Encoder::find(&params, config.encoder)?;
        let decoders = if mode.shared_decoder() {
            Decoders::Shared(CrfDecoder::find(&params, "decoder.shared")?, joint_space(&tasks))
        } else {
            Decoders::PerTask(
                tasks
                    .iter()
                    .map(|t| CrfDecoder::find(&params, &format!("decoder.{}", t.name)))
                    .collect::<Result<_>>()?,
            )
        };
        let task_table = if mode == Mode::TeDec {
            Some(
                params
                    .id("task_embedding")
                    .ok_or_else(|| Error::Format("missing parameter task_embedding".into()))?,
            )
        } else {
            None
        };
        Ok(Model {
            mode,
            config,
            label_index: label_index(&tasks),
            tasks,
            vocab,
            params,
            encoder,
            decoders,
            task_table,
        })
    }

    pub fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            mode: self.mode,
            config: self.config,
            tasks: self.tasks.clone(),
            vocab: self.vocab.clone(),
            params: self.params.clone(),
        }
    }

    pub fn task_id(&self, name: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.name == name)
    }

    fn check_task(&self, task: usize) -> Result<()> {
        if task >= self.tasks.len() {
            return Err(Error::contract(format!("task id {task} out of range")));
        }
        Ok(())
    }

    /// Word and character ids for a token sequence; te-enc prepends the
    /// task token, whose literal characters go through the char encoder.
    pub fn encoder_input(&self, tokens: &[String], task: Option<usize>) -> Result<EncoderInput> {
        let mut word_ids = Vec::with_capacity(tokens.len() + 1);
        let mut char_ids = Vec::with_capacity(tokens.len() + 1);
        let prepended = self.mode == Mode::TeEnc;
        if prepended {
            let task = task.ok_or_else(|| Error::contract("te-enc needs a task id"))?;
            self.check_task(task)?;
            let name = &self.tasks[task].name;
            let id = self
                .vocab
                .task_token_id(name)
                .ok_or_else(|| Error::contract(format!("no task token for {name}")))?;
            word_ids.push(id);
            char_ids.push(self.vocab.char_ids(&crate::corpus::task_token(name)));
        }
        for tok in tokens {
            word_ids.push(self.vocab.word_id(&tok.to_lowercase()));
            char_ids.push(self.vocab.char_ids(tok));
        }
        Ok(EncoderInput {
            word_ids,
            char_ids,
            prepended,
        })
    }

    /// Context vectors, one row per input position (including a prepended
    /// task token in te-enc mode).
    pub fn encode_sentence(
        &self,
        tape: &mut Tape<'_>,
        tokens: &[String],
        task: Option<usize>,
        dropout: Option<&mut Dropout<'_>>,
    ) -> Result<Var> {
        let input = self.encoder_input(tokens, task)?;
        self.encoder.encode(tape, &input, dropout)
    }

    /// Emission scores (`L × width`) for a sentence of `task`. Shared
    /// decoders produce the joint width.
    pub fn emissions(
        &self,
        tape: &mut Tape<'_>,
        tokens: &[String],
        task: usize,
        dropout: Option<&mut Dropout<'_>>,
    ) -> Result<Var> {
        self.check_task(task)?;
        let mut h = self.encode_sentence(tape, tokens, Some(task), dropout)?;
        let len = tokens.len();
        if self.mode == Mode::TeEnc {
            h = tape.slice(h, Axis::Rows, 1, len)?;
        }
        if let Some(table) = self.task_table {
            let table = tape.param(table);
            let row = tape.embedding(table, &[task])?;
            let ones = tape.constant(Tensor::filled(len, 1, 1.0))?;
            let tiled = tape.matmul(ones, row)?;
            h = tape.concat(&[h, tiled], Axis::Cols)?;
        }
        match &self.decoders {
            Decoders::PerTask(decs) => decs[task].project(tape, h),
            Decoders::Shared(dec, _) => dec.project(tape, h),
        }
    }

    fn gold_indices(&self, task: usize, sentence: &TaggedSentence) -> Result<Vec<usize>> {
        let index = &self.label_index[task];
        sentence
            .tags
            .iter()
            .map(|tag| {
                let local = *index.get(tag).ok_or_else(|| {
                    Error::contract(format!("tag {tag:?} is not a label of task {}", self.tasks[task].name))
                })?;
                Ok(match &self.decoders {
                    Decoders::PerTask(_) => local,
                    Decoders::Shared(_, joint) => joint.to_joint(task, local),
                })
            })
            .collect()
    }

    /// CRF negative log-likelihood of one sentence of model task `task`.
    pub fn sentence_loss(
        &self,
        tape: &mut Tape<'_>,
        task: usize,
        sentence: &TaggedSentence,
        dropout: Option<&mut Dropout<'_>>,
    ) -> Result<Var> {
        self.check_task(task)?;
        let gold = self.gold_indices(task, sentence)?;
        let e = self.emissions(tape, &sentence.tokens, task, dropout)?;
        match &self.decoders {
            Decoders::PerTask(decs) => {
                let labels: Vec<usize> = (0..decs[task].num_labels).collect();
                decs[task].nll(tape, e, &gold, &labels)
            }
            Decoders::Shared(dec, joint) => dec.nll(tape, e, &gold, &joint.indices(task)),
        }
    }

    /// Transition L2 penalty summed over every decoder.
    pub fn transition_penalty(&self, tape: &mut Tape<'_>) -> Result<Var> {
        let decs: Vec<&CrfDecoder> = match &self.decoders {
            Decoders::PerTask(d) => d.iter().collect(),
            Decoders::Shared(d, _) => vec![d],
        };
        let parts = decs
            .into_iter()
            .map(|d| d.l2_penalty(tape, TRANSITION_L2))
            .collect::<Result<Vec<_>>>()?;
        let joined = tape.concat(&parts, Axis::Cols)?;
        tape.sum(joined)
    }

    /// Mean sentence loss over `(task, sentence)` pairs plus the transition
    /// penalty. Parameter values come from the tape's store, so a tape over
    /// a perturbed copy of `self.params` evaluates the perturbed model.
    pub fn batch_loss(
        &self,
        tape: &mut Tape<'_>,
        batch: &[(usize, &TaggedSentence)],
        mut dropout: Option<&mut Dropout<'_>>,
    ) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        let losses = batch
            .iter()
            .map(|&(task, s)| self.sentence_loss(tape, task, s, dropout.as_deref_mut()))
            .collect::<Result<Vec<_>>>()?;
        let joined = tape.concat(&losses, Axis::Cols)?;
        let mean = tape.mean(joined)?;
        let penalty = self.transition_penalty(tape)?;
        tape.add(mean, penalty)
    }

    /// Viterbi-decoded tags for `tokens` under `task`.
    pub fn predict(&self, tokens: &[String], task: usize) -> Result<Vec<String>> {
        let mut tape = Tape::new(&self.params);
        let e = self.emissions(&mut tape, tokens, task, None)?;
        let emissions = tape.value(e);
        let labels = &self.tasks[task].labels;
        match &self.decoders {
            Decoders::PerTask(decs) => {
                let path = viterbi(emissions, self.params.tensor(decs[task].transitions), None)?;
                Ok(path.into_iter().map(|y| labels[y].clone()).collect())
            }
            Decoders::Shared(dec, joint) => {
                let mask = joint.mask(task);
                let path = viterbi(emissions, self.params.tensor(dec.transitions), Some(&mask))?;
                path.into_iter()
                    .map(|y| {
                        joint
                            .to_local(task, y)
                            .map(|l| labels[l].clone())
                            .ok_or_else(|| Error::contract("decoded a label outside the task mask"))
                    })
                    .collect()
            }
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn encoder_parameters(&self) -> usize {
        self.params
            .iter()
            .filter(|(_, p)| p.name.starts_with("encoder."))
            .map(|(_, p)| p.tensor.len())
            .sum()
    }

    /// Rows of the task-embedding table (te-dec only).
    pub fn task_embeddings(&self) -> Result<Vec<(String, Vec<f64>)>> {
        let id = self
            .task_table
            .ok_or_else(|| Error::contract(format!("task embeddings exist only in te-dec, not {}", self.mode)))?;
        let t = self.params.tensor(id);
        Ok(self
            .tasks
            .iter()
            .enumerate()
            .map(|(i, task)| (task.name.clone(), t.row_slice(i).to_vec()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synthetic::{generate, SyntheticSizes};
    use crate::gradcheck::finite_difference_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_config() -> ModelConfig {
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

    fn data() -> Vec<TaskData> {
        generate(
            1,
            SyntheticSizes {
                train: 6,
                dev: 2,
                test: 2,
            },
        )
        .unwrap()
    }

    #[test]
    fn output_lengths_by_mode() {
        let data = data();
        let s = &data[1].train[0];
        for mode in Mode::MTL {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let (model, _) = Model::for_tasks(mode, toy_config(), &data, None, &mut rng).unwrap();
            let mut tape = Tape::new(&model.params);
            let h = model.encode_sentence(&mut tape, &s.tokens, Some(1), None).unwrap();
            let extra = usize::from(mode == Mode::TeEnc);
            assert_eq!(tape.value(h).shape(), &[s.len() + extra, 10]);
            let e = model.emissions(&mut tape, &s.tokens, 1, None).unwrap();
            let width = if mode.shared_decoder() { 4 } else { 2 };
            assert_eq!(tape.value(e).shape(), &[s.len(), width]);
            let tags = model.predict(&s.tokens, 1).unwrap();
            assert!(tags.iter().all(|t| t == "EVEN" || t == "ODD"));
        }
    }

    #[test]
    fn te_enc_requires_task() {
        let data = data();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (model, _) = Model::for_tasks(Mode::TeEnc, toy_config(), &data, None, &mut rng).unwrap();
        let mut tape = Tape::new(&model.params);
        assert!(model
            .encode_sentence(&mut tape, &data[0].train[0].tokens, None, None)
            .is_err());
    }

    #[test]
    fn stl_requires_one_task() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Model::for_tasks(Mode::Stl, toy_config(), &data(), None, &mut rng).is_err());
        assert!(Model::for_tasks(Mode::Stl, toy_config(), &data()[..1], None, &mut rng).is_ok());
    }

    #[test]
    fn snapshot_roundtrip_preserves_predictions() {
        let data = data();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (model, _) = Model::for_tasks(Mode::TeDec, toy_config(), &data, None, &mut rng).unwrap();
        let json = serde_json::to_string(&model.snapshot()).unwrap();
        let back = Model::from_snapshot(serde_json::from_str(&json).unwrap()).unwrap();
        let s = &data[0].dev[0];
        assert_eq!(
            model.predict(&s.tokens, 0).unwrap(),
            back.predict(&s.tokens, 0).unwrap()
        );
        assert_eq!(model.task_embeddings().unwrap(), back.task_embeddings().unwrap());
    }

    #[test]
    fn combined_loss_gradients_all_modes() {
        let data = data();
        let batch: Vec<(usize, &TaggedSentence)> = vec![(0, &data[0].train[0]), (1, &data[1].train[0])];
        for mode in Mode::MTL {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let (mut model, _) = Model::for_tasks(mode, toy_config(), &data, None, &mut rng).unwrap();
            let snapshot = model.clone();
            let report = finite_difference_check(&mut model.params, 1e-5, |tape| {
                let mut drng = ChaCha8Rng::seed_from_u64(3);
                let mut d = Dropout {
                    rng: &mut drng,
                    char_rate: 0.25,
                    word_rate: 0.5,
                };
                snapshot.batch_loss(tape, &batch, Some(&mut d))
            })
            .unwrap();
            // relative agreement wherever a central difference can resolve
            // the gradient; below that, round-off of the loss dominates
            for e in &report.entries {
                assert!(e.within(1e-4, 1e-9), "{mode}: {e:?}");
            }
        }
    }
}
