//! Character-level and word-level bidirectional GRU encoders.
//!
//! Row-vector convention: a cell computes
//! `z = σ(x Wz + h Uz + bz)`, `r = σ(x Wr + h Ur + br)`,
//! `h̃ = tanh(x Wh + (r ⊙ h) Uh + bh)`, `h' = (1 − z) ⊙ h + z ⊙ h̃`,
//! with `W` stored as `input × hidden` and `U` as `hidden × hidden`.
//! Initial states are zero.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::{init_parameter, InitKind};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Axis, Tape, Var};
use crate::tensor::Tensor;

/// Encoder sizes. Defaults are the full-size model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderDims {
    pub char_emb: usize,
    pub char_hidden: usize,
    pub word_emb: usize,
    pub word_hidden: usize,
}

impl Default for EncoderDims {
    fn default() -> Self {
        EncoderDims {
            char_emb: 25,
            char_hidden: 25,
            word_emb: 50,
            word_hidden: 300,
        }
    }
}

impl EncoderDims {
    /// Width of the per-token input to the first word layer.
    pub fn token_dim(&self) -> usize {
        self.word_emb + 2 * self.char_hidden
    }

    /// Width of each encoder output vector.
    pub fn output_dim(&self) -> usize {
        2 * self.word_hidden
    }
}

/// Inverted dropout: kept entries are scaled by `1/(1−p)`.
pub struct Dropout<'a> {
    pub rng: &'a mut dyn RngCore,
    pub char_rate: f64,
    pub word_rate: f64,
}

impl Dropout<'_> {
    pub fn mask(&mut self, rows: usize, cols: usize, rate: f64) -> Tensor {
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        let data = (0..rows * cols)
            .map(|_| if self.rng.gen::<f64>() < keep { scale } else { 0.0 })
            .collect();
        Tensor::matrix(rows, cols, data).expect("positive extents")
    }
}

fn apply_dropout(tape: &mut Tape<'_>, x: Var, rate: f64, dropout: &mut Option<&mut Dropout<'_>>) -> Result<Var> {
    match dropout {
        Some(d) if rate > 0.0 => {
            let (r, c) = (tape.value(x).rows(), tape.value(x).cols());
            let mask = d.mask(r, c, rate);
            tape.dropout(x, mask)
        }
        _ => Ok(x),
    }
}

/// Parameter handles of one GRU cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GruCell {
    pub wz: ParamId,
    pub wr: ParamId,
    pub wh: ParamId,
    pub uz: ParamId,
    pub ur: ParamId,
    pub uh: ParamId,
    pub bz: ParamId,
    pub br: ParamId,
    pub bh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

const GATES: [&str; 3] = ["z", "r", "h"];

impl GruCell {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<GruCell> {
        let mut ids = Vec::with_capacity(9);
        for g in GATES {
            let t = init_parameter(input, hidden, InitKind::WeightMatrix, rng);
            ids.push(store.insert(format!("{prefix}.W{g}"), t, true)?);
        }
        for g in GATES {
            let t = init_parameter(hidden, hidden, InitKind::WeightMatrix, rng);
            ids.push(store.insert(format!("{prefix}.U{g}"), t, true)?);
        }
        for g in GATES {
            let t = init_parameter(1, hidden, InitKind::Bias, rng);
            ids.push(store.insert(format!("{prefix}.b{g}"), t, true)?);
        }
        GruCell::from_ids(&ids, input, hidden)
    }

    pub fn find(store: &ParamStore, prefix: &str) -> Result<GruCell> {
        let mut ids = Vec::with_capacity(9);
        for kind in ["W", "U", "b"] {
            for g in GATES {
                let name = format!("{prefix}.{kind}{g}");
                ids.push(
                    store
                        .id(&name)
                        .ok_or_else(|| Error::Format(format!("missing parameter {name}")))?,
                );
            }
        }
        let w = store.tensor(ids[0]);
        GruCell::from_ids(&ids, w.rows(), w.cols())
    }

    fn from_ids(ids: &[ParamId], input: usize, hidden: usize) -> Result<GruCell> {
        Ok(GruCell {
            wz: ids[0],
            wr: ids[1],
            wh: ids[2],
            uz: ids[3],
            ur: ids[4],
            uh: ids[5],
            bz: ids[6],
            br: ids[7],
            bh: ids[8],
            input,
            hidden,
        })
    }

    pub fn num_parameters(input: usize, hidden: usize) -> usize {
        3 * (input * hidden + hidden * hidden + hidden)
    }

    /// Input projections `X W + b` for every gate over a whole sequence.
    fn project_inputs(&self, tape: &mut Tape<'_>, inputs: Var) -> Result<[Var; 3]> {
        let mut out = [inputs; 3];
        for (slot, (w, b)) in out
            .iter_mut()
            .zip([(self.wz, self.bz), (self.wr, self.br), (self.wh, self.bh)])
        {
            let wv = tape.param(w);
            let bv = tape.param(b);
            let xw = tape.matmul(inputs, wv)?;
            *slot = tape.add(xw, bv)?;
        }
        Ok(out)
    }

    /// One step given the projected inputs of this position (`1 × hidden`
    /// each) and the previous state.
    pub fn step_projected(&self, tape: &mut Tape<'_>, xz: Var, xr: Var, xh: Var, h: Var) -> Result<Var> {
        let (uz, ur, uh) = (tape.param(self.uz), tape.param(self.ur), tape.param(self.uh));
        let hz = tape.matmul(h, uz)?;
        let az = tape.add(xz, hz)?;
        let z = tape.sigmoid(az)?;
        let hr = tape.matmul(h, ur)?;
        let ar = tape.add(xr, hr)?;
        let r = tape.sigmoid(ar)?;
        let rh = tape.mul(r, h)?;
        let rhu = tape.matmul(rh, uh)?;
        let ah = tape.add(xh, rhu)?;
        let cand = tape.tanh(ah)?;
        let diff = tape.sub(cand, h)?;
        let zd = tape.mul(z, diff)?;
        tape.add(h, zd)
    }

    /// One step on a raw `1 × input` vector.
    pub fn step(&self, tape: &mut Tape<'_>, x: Var, h: Var) -> Result<Var> {
        let dims = (tape.value(x).cols(), tape.value(h).cols());
        if dims != (self.input, self.hidden) || tape.value(x).rows() != 1 || tape.value(h).rows() != 1 {
            return Err(Error::Shape {
                op: "gru_cell",
                left: vec![self.input, self.hidden],
                right: vec![dims.0, dims.1],
            });
        }
        let [xz, xr, xh] = self.project_inputs(tape, x)?;
        self.step_projected(tape, xz, xr, xh, h)
    }

    /// Run over the rows of `inputs` (`n × input`), optionally right to
    /// left. States are returned in input order, each `1 × hidden`.
    pub fn run(&self, tape: &mut Tape<'_>, inputs: Var, reverse: bool) -> Result<Vec<Var>> {
        let t = tape.value(inputs);
        if t.cols() != self.input {
            return Err(Error::Shape {
                op: "gru_run",
                left: vec![self.input],
                right: t.shape().to_vec(),
            });
        }
        let n = t.rows();
        let [pz, pr, ph] = self.project_inputs(tape, inputs)?;
        let mut h = tape.constant(Tensor::zeros(1, self.hidden))?;
        let mut states = vec![h; n];
        let order: Vec<usize> = if reverse {
            (0..n).rev().collect()
        } else {
            (0..n).collect()
        };
        for i in order {
            let xz = tape.slice(pz, Axis::Rows, i, 1)?;
            let xr = tape.slice(pr, Axis::Rows, i, 1)?;
            let xh = tape.slice(ph, Axis::Rows, i, 1)?;
            h = self.step_projected(tape, xz, xr, xh, h)?;
            states[i] = h;
        }
        Ok(states)
    }
}

/// Bidirectional layer over `n × input` rows, giving `n × 2·hidden`.
pub fn bidirectional(tape: &mut Tape<'_>, fwd: &GruCell, bwd: &GruCell, inputs: Var) -> Result<Var> {
    let f = fwd.run(tape, inputs, false)?;
    let b = bwd.run(tape, inputs, true)?;
    let f = tape.concat(&f, Axis::Rows)?;
    let b = tape.concat(&b, Axis::Rows)?;
    tape.concat(&[f, b], Axis::Cols)
}

/// Token ids for one encoder pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderInput {
    pub word_ids: Vec<usize>,
    pub char_ids: Vec<Vec<usize>>,
    /// Whether position 0 is a prepended task token.
    pub prepended: bool,
}

/// The shared encoder: character biGRU per word, word embedding, and two
/// stacked word-level biGRU layers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoder {
    pub dims: EncoderDims,
    pub char_emb: ParamId,
    pub char_fwd: GruCell,
    pub char_bwd: GruCell,
    pub word_emb: ParamId,
    pub layer1: (GruCell, GruCell),
    pub layer2: (GruCell, GruCell),
}

impl Encoder {
    /// Register every encoder parameter. `word_table` must be
    /// `num_words × dims.word_emb` (random or pretrained rows).
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        dims: EncoderDims,
        num_chars: usize,
        word_table: Tensor,
        rng: &mut R,
    ) -> Result<Encoder> {
        if word_table.cols() != dims.word_emb {
            return Err(Error::Shape {
                op: "word_embedding",
                left: vec![dims.word_emb],
                right: word_table.shape().to_vec(),
            });
        }
        let char_emb = store.insert(
            "encoder.char.emb",
            init_parameter(num_chars, dims.char_emb, InitKind::CharEmbedding, rng),
            true,
        )?;
        let char_fwd = GruCell::register(store, "encoder.char.fwd", dims.char_emb, dims.char_hidden, rng)?;
        let char_bwd = GruCell::register(store, "encoder.char.bwd", dims.char_emb, dims.char_hidden, rng)?;
        let word_emb = store.insert("encoder.word.emb", word_table, true)?;
        let h = dims.word_hidden;
        let l1f = GruCell::register(store, "encoder.word.layer1.fwd", dims.token_dim(), h, rng)?;
        let l1b = GruCell::register(store, "encoder.word.layer1.bwd", dims.token_dim(), h, rng)?;
        let l2f = GruCell::register(store, "encoder.word.layer2.fwd", 2 * h, h, rng)?;
        let l2b = GruCell::register(store, "encoder.word.layer2.bwd", 2 * h, h, rng)?;
        Ok(Encoder {
            dims,
            char_emb,
            char_fwd,
            char_bwd,
            word_emb,
            layer1: (l1f, l1b),
            layer2: (l2f, l2b),
        })
    }

    pub fn find(store: &ParamStore, dims: EncoderDims) -> Result<Encoder> {
        let id = |name: &str| {
            store
                .id(name)
                .ok_or_else(|| Error::Format(format!("missing parameter {name}")))
        };
        Ok(Encoder {
            dims,
            char_emb: id("encoder.char.emb")?,
            char_fwd: GruCell::find(store, "encoder.char.fwd")?,
            char_bwd: GruCell::find(store, "encoder.char.bwd")?,
            word_emb: id("encoder.word.emb")?,
            layer1: (
                GruCell::find(store, "encoder.word.layer1.fwd")?,
                GruCell::find(store, "encoder.word.layer1.bwd")?,
            ),
            layer2: (
                GruCell::find(store, "encoder.word.layer2.fwd")?,
                GruCell::find(store, "encoder.word.layer2.bwd")?,
            ),
        })
    }

    pub fn num_parameters(dims: EncoderDims, num_chars: usize, num_words: usize) -> usize {
        let h = dims.word_hidden;
        num_chars * dims.char_emb
            + 2 * GruCell::num_parameters(dims.char_emb, dims.char_hidden)
            + num_words * dims.word_emb
            + 2 * GruCell::num_parameters(dims.token_dim(), h)
            + 2 * GruCell::num_parameters(2 * h, h)
    }

    /// Final forward state ++ final backward state of the character biGRU
    /// (`1 × 2·char_hidden`).
    pub fn encode_chars(
        &self,
        tape: &mut Tape<'_>,
        char_ids: &[usize],
        dropout: &mut Option<&mut Dropout<'_>>,
    ) -> Result<Var> {
        if char_ids.is_empty() {
            return Err(Error::contract("cannot encode an empty word"));
        }
        let table = tape.param(self.char_emb);
        let x = tape.embedding(table, char_ids)?;
        let rate = dropout.as_ref().map_or(0.0, |d| d.char_rate);
        let x = apply_dropout(tape, x, rate, dropout)?;
        let f = self.char_fwd.run(tape, x, false)?;
        let b = self.char_bwd.run(tape, x, true)?;
        tape.concat(&[f[f.len() - 1], b[0]], Axis::Cols)
    }

    /// Encode a token sequence to `n × 2·word_hidden` context vectors.
    pub fn encode(
        &self,
        tape: &mut Tape<'_>,
        input: &EncoderInput,
        mut dropout: Option<&mut Dropout<'_>>,
    ) -> Result<Var> {
        if input.word_ids.is_empty() || input.word_ids.len() != input.char_ids.len() {
            return Err(Error::contract(
                "encoder input needs matching non-empty word and char ids",
            ));
        }
        let table = tape.param(self.word_emb);
        let words = tape.embedding(table, &input.word_ids)?;
        let chars = input
            .char_ids
            .iter()
            .map(|c| self.encode_chars(tape, c, &mut dropout))
            .collect::<Result<Vec<_>>>()?;
        let chars = tape.concat(&chars, Axis::Rows)?;
        let x = tape.concat(&[words, chars], Axis::Cols)?;
        let rate = dropout.as_ref().map_or(0.0, |d| d.word_rate);
        let x = apply_dropout(tape, x, rate, &mut dropout)?;
        let h1 = bidirectional(tape, &self.layer1.0, &self.layer1.1, x)?;
        let h1 = apply_dropout(tape, h1, rate, &mut dropout)?;
        bidirectional(tape, &self.layer2.0, &self.layer2.1, h1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::finite_difference_check;
    use crate::oracle::{scalar_gru_step, ScalarGru};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn nested(t: &Tensor) -> Vec<Vec<f64>> {
        (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
    }

    #[test]
    fn zero_cell_halves_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let cell = GruCell::register(&mut store, "c", 2, 3, &mut rng).unwrap();
        for (_, p) in store.iter_mut() {
            p.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::row(&[0.3, -0.9])).unwrap();
        let h = tape.constant(Tensor::row(&[1.0, -2.0, 0.5])).unwrap();
        let out = cell.step(&mut tape, x, h).unwrap();
        assert_eq!(tape.value(out).data(), &[0.5, -1.0, 0.25]);
        let zero = tape.constant(Tensor::zeros(1, 3)).unwrap();
        let out = cell.step(&mut tape, x, zero).unwrap();
        assert_eq!(tape.value(out).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn matches_scalar_loop_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut store = ParamStore::new();
        let cell = GruCell::register(&mut store, "c", 3, 3, &mut rng).unwrap();
        for (_, p) in store.iter_mut() {
            p.tensor
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-1.0..1.0));
        }
        let t = |id| store.tensor(id);
        let oracle = ScalarGru {
            wz: nested(t(cell.wz)),
            wr: nested(t(cell.wr)),
            wh: nested(t(cell.wh)),
            uz: nested(t(cell.uz)),
            ur: nested(t(cell.ur)),
            uh: nested(t(cell.uh)),
            bz: t(cell.bz).data().to_vec(),
            br: t(cell.br).data().to_vec(),
            bh: t(cell.bh).data().to_vec(),
        };
        let x = [0.4, -1.1, 0.7];
        let h = [0.2, 0.9, -0.5];
        let want = scalar_gru_step(&oracle, &x, &h);
        let mut tape = Tape::new(&store);
        let xv = tape.constant(Tensor::row(&x)).unwrap();
        let hv = tape.constant(Tensor::row(&h)).unwrap();
        let got = cell.step(&mut tape, xv, hv).unwrap();
        for (a, b) in tape.value(got).data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn step_rejects_wrong_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let cell = GruCell::register(&mut store, "c", 2, 3, &mut rng).unwrap();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::row(&[1.0, 2.0, 3.0])).unwrap();
        let h = tape.constant(Tensor::zeros(1, 3)).unwrap();
        assert!(matches!(cell.step(&mut tape, x, h), Err(Error::Shape { .. })));
    }

    #[test]
    fn tied_cells_mirror_under_reversal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let cell = GruCell::register(&mut store, "c", 2, 4, &mut rng).unwrap();
        let rows: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let reversed: Vec<f64> = rows.chunks(2).rev().flatten().copied().collect();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::matrix(5, 2, rows).unwrap()).unwrap();
        let xr = tape.constant(Tensor::matrix(5, 2, reversed).unwrap()).unwrap();
        let a = bidirectional(&mut tape, &cell, &cell, x).unwrap();
        let b = bidirectional(&mut tape, &cell, &cell, xr).unwrap();
        let (a, b) = (tape.value(a), tape.value(b));
        for i in 0..5 {
            let (ra, rb) = (a.row_slice(i), b.row_slice(4 - i));
            assert_eq!(&ra[..4], &rb[4..]);
            assert_eq!(&ra[4..], &rb[..4]);
        }
    }

    fn toy_encoder(store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Encoder {
        let dims = EncoderDims {
            char_emb: 3,
            char_hidden: 2,
            word_emb: 4,
            word_hidden: 5,
        };
        let words = init_parameter(6, 4, InitKind::UncoveredWordEmbedding, rng);
        Encoder::register(store, dims, 7, words, rng).unwrap()
    }

    fn toy_input() -> EncoderInput {
        EncoderInput {
            word_ids: vec![2, 5, 3],
            char_ids: vec![vec![2, 3], vec![4], vec![5, 6, 2]],
            prepended: false,
        }
    }

    #[test]
    fn output_shape_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let enc = toy_encoder(&mut store, &mut rng);
        let mut tape = Tape::new(&store);
        let a = enc.encode(&mut tape, &toy_input(), None).unwrap();
        let b = enc.encode(&mut tape, &toy_input(), None).unwrap();
        assert_eq!(tape.value(a).shape(), &[3, 10]);
        assert_eq!(tape.value(a), tape.value(b));
        assert_eq!(
            store.num_scalars(),
            Encoder::num_parameters(enc.dims, 7, 6),
            "closed-form encoder size"
        );
    }

    #[test]
    fn character_case_matters_and_zero_cells_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let enc = toy_encoder(&mut store, &mut rng);
        let mut tape = Tape::new(&store);
        let upper = enc.encode_chars(&mut tape, &[2, 3], &mut None).unwrap();
        let lower = enc.encode_chars(&mut tape, &[4, 3], &mut None).unwrap();
        assert_ne!(tape.value(upper), tape.value(lower));
        let single = enc.encode_chars(&mut tape, &[4], &mut None).unwrap();
        assert_eq!(tape.value(single).shape(), &[1, 4]);
        drop(tape);
        for (_, p) in store.iter_mut() {
            if p.name.starts_with("encoder.char.fwd") || p.name.starts_with("encoder.char.bwd") {
                p.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let mut tape = Tape::new(&store);
        let z = enc.encode_chars(&mut tape, &[2, 3, 4], &mut None).unwrap();
        assert!(tape.value(z).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_pooled_output_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let enc = toy_encoder(&mut store, &mut rng);
        let report = finite_difference_check(&mut store, 1e-5, |tape| {
            let mut drng = ChaCha8Rng::seed_from_u64(9);
            let mut d = Dropout {
                rng: &mut drng,
                char_rate: 0.25,
                word_rate: 0.5,
            };
            let out = enc.encode(tape, &toy_input(), Some(&mut d))?;
            let t = tape.tanh(out)?;
            tape.mean(t)
        })
        .unwrap();
        assert!(report.max_relative_error <= 1e-4, "{report:?}");
    }

    #[test]
    fn dropout_mask_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Dropout {
            rng: &mut rng,
            char_rate: 0.25,
            word_rate: 0.5,
        };
        let m = d.mask(100, 10, 0.5);
        assert!(m.data().iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = m.data().iter().filter(|&&v| v > 0.0).count();
        assert!((400..600).contains(&kept));
    }
}
