//! Linear projection to tag scores followed by a linear-chain CRF.
//!
//! A decoder over `K` labels owns a `(K+2)×(K+2)` transition matrix whose
//! last two states are the synthetic START (`K`) and STOP (`K+1`). Moving
//! into START or out of STOP is impossible: those entries hold `-inf` and
//! never receive gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::{init_parameter, InitKind};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Axis, Tape, Var};
use crate::tensor::{log_sum_exp, Tensor};

/// L2 coefficient applied to CRF transition matrices.
pub const TRANSITION_L2: f64 = 0.01;

/// Task-qualified union of label sets (`task:tag`), laid out task by task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointLabelSpace {
    labels: Vec<String>,
    offsets: Vec<usize>,
    sizes: Vec<usize>,
}

impl JointLabelSpace {
    pub fn new<S: AsRef<str>>(tasks: &[(S, Vec<String>)]) -> JointLabelSpace {
        let mut labels = Vec::new();
        let mut offsets = Vec::new();
        let mut sizes = Vec::new();
        for (name, tags) in tasks {
            offsets.push(labels.len());
            sizes.push(tags.len());
            labels.extend(tags.iter().map(|t| format!("{}:{t}", name.as_ref())));
        }
        JointLabelSpace { labels, offsets, sizes }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_tasks(&self) -> usize {
        self.sizes.len()
    }

    /// Joint indices belonging to `task`, ascending.
    pub fn indices(&self, task: usize) -> Vec<usize> {
        (self.offsets[task]..self.offsets[task] + self.sizes[task]).collect()
    }

    pub fn mask(&self, task: usize) -> Vec<bool> {
        let r = self.offsets[task]..self.offsets[task] + self.sizes[task];
        (0..self.len()).map(|j| r.contains(&j)).collect()
    }

    pub fn to_joint(&self, task: usize, local: usize) -> usize {
        self.offsets[task] + local
    }

    pub fn to_local(&self, task: usize, joint: usize) -> Option<usize> {
        let off = self.offsets[task];
        (joint >= off && joint < off + self.sizes[task]).then(|| joint - off)
    }
}

fn check_transitions(emissions: &Tensor, transitions: &Tensor) -> Result<usize> {
    let k = emissions.cols();
    if transitions.rows() != k + 2 || transitions.cols() != k + 2 {
        return Err(Error::Shape {
            op: "crf",
            left: emissions.shape().to_vec(),
            right: transitions.shape().to_vec(),
        });
    }
    Ok(k)
}

fn masked_emissions(emissions: &Tensor, mask: Option<&[bool]>) -> Result<Tensor> {
    let Some(mask) = mask else {
        return Ok(emissions.clone());
    };
    if mask.len() != emissions.cols() {
        return Err(Error::Shape {
            op: "crf mask",
            left: emissions.shape().to_vec(),
            right: vec![mask.len()],
        });
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::contract("label mask selects no labels"));
    }
    let mut e = emissions.clone();
    let k = e.cols();
    for (i, v) in e.data_mut().iter_mut().enumerate() {
        if !mask[i % k] {
            *v = f64::NEG_INFINITY;
        }
    }
    Ok(e)
}

fn log_partition_unchecked(e: &Tensor, transitions: &Tensor, k: usize) -> f64 {
    let (start, stop) = (k, k + 1);
    let mut alpha: Vec<f64> = (0..k).map(|j| transitions.get(start, j) + e.get(0, j)).collect();
    let mut scratch = vec![0.0; k];
    for l in 1..e.rows() {
        let next: Vec<f64> = (0..k)
            .map(|j| {
                for i in 0..k {
                    scratch[i] = alpha[i] + transitions.get(i, j);
                }
                log_sum_exp(&scratch) + e.get(l, j)
            })
            .collect();
        alpha = next;
    }
    let last: Vec<f64> = (0..k).map(|j| alpha[j] + transitions.get(j, stop)).collect();
    log_sum_exp(&last)
}

/// Log of the sum over all tag sequences of `exp(score)`, by the forward
/// recursion in log space.
pub fn crf_log_partition(emissions: &Tensor, transitions: &Tensor) -> Result<f64> {
    let k = check_transitions(emissions, transitions)?;
    Ok(log_partition_unchecked(emissions, transitions, k))
}

/// Score of one tag sequence.
pub fn crf_path_score(emissions: &Tensor, transitions: &Tensor, path: &[usize]) -> Result<f64> {
    let k = check_transitions(emissions, transitions)?;
    if path.len() != emissions.rows() || path.iter().any(|&y| y >= k) {
        return Err(Error::contract("path does not fit the emissions"));
    }
    let mut s = transitions.get(k, path[0]) + transitions.get(path[path.len() - 1], k + 1);
    for (l, &y) in path.iter().enumerate() {
        s += emissions.get(l, y);
        if l > 0 {
            s += transitions.get(path[l - 1], y);
        }
    }
    Ok(s)
}

/// Negative log-likelihood of `gold`; labels outside `mask` are excluded
/// from the partition function.
pub fn crf_nll(emissions: &Tensor, gold: &[usize], transitions: &Tensor, mask: Option<&[bool]>) -> Result<f64> {
    let k = check_transitions(emissions, transitions)?;
    let e = masked_emissions(emissions, mask)?;
    if let Some(m) = mask {
        if gold.iter().any(|&y| y < k && !m[y]) {
            return Err(Error::contract("gold tag outside the task's label mask"));
        }
    }
    let gold_score = crf_path_score(&e, transitions, gold)?;
    Ok(log_partition_unchecked(&e, transitions, k) - gold_score)
}

/// Highest-scoring sequence over the unmasked labels. Ties prefer the
/// lowest label index (for predecessors and for the final label).
pub fn viterbi(emissions: &Tensor, transitions: &Tensor, mask: Option<&[bool]>) -> Result<Vec<usize>> {
    let k = check_transitions(emissions, transitions)?;
    let e = masked_emissions(emissions, mask)?;
    let (start, stop) = (k, k + 1);
    let len = e.rows();
    let mut delta: Vec<f64> = (0..k).map(|j| transitions.get(start, j) + e.get(0, j)).collect();
    let mut back = vec![vec![0usize; k]; len];
    for l in 1..len {
        let mut next = vec![f64::NEG_INFINITY; k];
        for j in 0..k {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for (i, &d) in delta.iter().enumerate() {
                let v = d + transitions.get(i, j);
                if v > best_v {
                    best_v = v;
                    best = i;
                }
            }
            back[l][j] = best;
            next[j] = best_v + e.get(l, j);
        }
        delta = next;
    }
    let mut last = None;
    let mut best_v = f64::NEG_INFINITY;
    for j in 0..k {
        let v = delta[j] + transitions.get(j, stop);
        if v > best_v {
            best_v = v;
            last = Some(j);
        }
    }
    // every path is -inf only if the mask admits nothing reachable
    let mut y = last.ok_or_else(|| Error::contract("no finite-scoring path"))?;
    let mut path = vec![0; len];
    for l in (0..len).rev() {
        path[l] = y;
        y = back[l][y];
    }
    Ok(path)
}

/// `coeff × Σ t²` over the finite entries of a transition matrix.
pub fn transition_l2_penalty(transitions: &Tensor, coeff: f64) -> f64 {
    coeff
        * transitions
            .data()
            .iter()
            .filter(|v| v.is_finite())
            .map(|v| v * v)
            .sum::<f64>()
}

/// Draw a `(K+2)×(K+2)` transition matrix with the impossible moves fixed
/// at `-inf`.
pub fn init_transitions<R: Rng + ?Sized>(num_labels: usize, rng: &mut R) -> Tensor {
    let n = num_labels + 2;
    let (start, stop) = (num_labels, num_labels + 1);
    let mut t = init_parameter(n, n, InitKind::WeightMatrix, rng);
    for i in 0..n {
        t.set(i, start, f64::NEG_INFINITY);
        t.set(stop, i, f64::NEG_INFINITY);
    }
    t
}

/// Parameter handles of one projection + CRF decoder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrfDecoder {
    pub weight: ParamId,
    pub bias: ParamId,
    pub transitions: ParamId,
    pub input_dim: usize,
    pub num_labels: usize,
}

impl CrfDecoder {
    /// Add `{prefix}.proj.W`, `{prefix}.proj.b` and `{prefix}.transitions`.
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        num_labels: usize,
        rng: &mut R,
    ) -> Result<CrfDecoder> {
        if num_labels == 0 {
            return Err(Error::contract(format!("decoder {prefix} has no labels")));
        }
        let weight = store.insert(
            format!("{prefix}.proj.W"),
            init_parameter(input_dim, num_labels, InitKind::WeightMatrix, rng),
            true,
        )?;
        let bias = store.insert(
            format!("{prefix}.proj.b"),
            init_parameter(1, num_labels, InitKind::Bias, rng),
            true,
        )?;
        let transitions = store.insert(format!("{prefix}.transitions"), init_transitions(num_labels, rng), true)?;
        Ok(CrfDecoder {
            weight,
            bias,
            transitions,
            input_dim,
            num_labels,
        })
    }

    /// Look up an existing decoder by prefix.
    pub fn find(store: &ParamStore, prefix: &str) -> Result<CrfDecoder> {
        let id = |suffix: &str| {
            store
                .id(&format!("{prefix}.{suffix}"))
                .ok_or_else(|| Error::Format(format!("missing parameter {prefix}.{suffix}")))
        };
        let weight = id("proj.W")?;
        let w = store.tensor(weight);
        Ok(CrfDecoder {
            weight,
            bias: id("proj.b")?,
            transitions: id("transitions")?,
            input_dim: w.rows(),
            num_labels: w.cols(),
        })
    }

    /// `L × d` inputs to `L × K` emission scores.
    pub fn project(&self, tape: &mut Tape<'_>, input: Var) -> Result<Var> {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let xw = tape.matmul(input, w)?;
        tape.add(xw, b)
    }

    /// CRF negative log-likelihood restricted to `labels` (ascending decoder
    /// indices); `gold` holds decoder indices that must lie within `labels`.
    pub fn nll(&self, tape: &mut Tape<'_>, emissions: Var, gold: &[usize], labels: &[usize]) -> Result<Var> {
        let k = self.num_labels;
        let (start, stop) = (k, k + 1);
        let len = tape.value(emissions).rows();
        if gold.len() != len || len == 0 {
            return Err(Error::contract(format!(
                "gold length {} does not match {} emission rows",
                gold.len(),
                len
            )));
        }
        let local: Vec<usize> = gold
            .iter()
            .map(|y| {
                labels
                    .iter()
                    .position(|l| l == y)
                    .ok_or_else(|| Error::contract(format!("gold label {y} outside the task's label set")))
            })
            .collect::<Result<_>>()?;
        let n = labels.len();

        // single-axis selections would drag the -inf entries along, so
        // pick the finite blocks entry by entry
        let trans = tape.param(self.transitions);
        let block: Vec<(usize, usize)> = labels
            .iter()
            .flat_map(|&i| labels.iter().map(move |&j| (i, j)))
            .collect();
        let inner = tape.gather(trans, &block)?;
        let inner = tape.reshape(inner, n, n)?;
        let start_pos: Vec<(usize, usize)> = labels.iter().map(|&j| (start, j)).collect();
        let start_row = tape.gather(trans, &start_pos)?; // 1 × n
        let stop_pos: Vec<(usize, usize)> = labels.iter().map(|&i| (i, stop)).collect();
        let stop_row = tape.gather(trans, &stop_pos)?; // 1 × n
        let e = tape.index_select(emissions, Axis::Cols, labels)?; // L × n

        // forward recursion
        let e0 = tape.slice(e, Axis::Rows, 0, 1)?;
        let mut alpha = tape.add(start_row, e0)?;
        for l in 1..len {
            let col = tape.reshape(alpha, n, 1)?;
            let scores = tape.add(col, inner)?;
            let reduced = tape.logsumexp(scores, Axis::Rows)?;
            let el = tape.slice(e, Axis::Rows, l, 1)?;
            alpha = tape.add(reduced, el)?;
        }
        let end = tape.add(alpha, stop_row)?;
        let log_z = tape.logsumexp(end, Axis::Cols)?;

        // gold path score
        let positions: Vec<(usize, usize)> = local.iter().enumerate().map(|(l, &y)| (l, y)).collect();
        let emit = tape.gather(e, &positions)?;
        let mut parts = vec![tape.sum(emit)?];
        let first = tape.gather(start_row, &[(0, local[0])])?;
        parts.push(first);
        let last = tape.gather(stop_row, &[(0, local[len - 1])])?;
        parts.push(last);
        if len > 1 {
            let pairs: Vec<(usize, usize)> = local.windows(2).map(|w| (w[0], w[1])).collect();
            let tr = tape.gather(inner, &pairs)?;
            parts.push(tape.sum(tr)?);
        }
        let joined = tape.concat(&parts, Axis::Cols)?;
        let gold_score = tape.sum(joined)?;
        tape.sub(log_z, gold_score)
    }

    /// `coeff × Σ t²` over the finite transition entries.
    pub fn l2_penalty(&self, tape: &mut Tape<'_>, coeff: f64) -> Result<Var> {
        let k = self.num_labels;
        let trans = tape.param(self.transitions);
        // everything except the STOP row and START column, which are -inf
        let cols: Vec<usize> = (0..k).chain([k + 1]).collect();
        let positions: Vec<(usize, usize)> = (0..=k).flat_map(|i| cols.iter().map(move |&j| (i, j))).collect();
        let finite = tape.gather(trans, &positions)?;
        let sq = tape.mul(finite, finite)?;
        let s = tape.sum(sq)?;
        tape.scale(s, coeff)
    }

    pub fn num_parameters(input_dim: usize, num_labels: usize) -> usize {
        input_dim * num_labels + num_labels + (num_labels + 2) * (num_labels + 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::finite_difference_check;
    use crate::oracle::{brute_argmax, brute_log_partition};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, len: usize, k: usize) -> (Tensor, Tensor) {
        let e = Tensor::matrix(len, k, (0..len * k).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let t = Tensor::matrix(
            k + 2,
            k + 2,
            (0..(k + 2) * (k + 2)).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        (e, t)
    }

    #[test]
    fn single_position_partition() {
        let e = Tensor::row(&[0.3, -1.2]);
        let t = Tensor::zeros(4, 4);
        let z = crf_log_partition(&e, &t).unwrap();
        assert!((z - log_sum_exp(&[0.3, -1.2])).abs() < 1e-12);
    }

    #[test]
    fn uniform_partition_and_nll() {
        let t = Tensor::zeros(4, 4);
        let z = crf_log_partition(&Tensor::zeros(3, 2), &t).unwrap();
        assert!((z - 3.0 * 2f64.ln()).abs() < 1e-12);
        let nll = crf_nll(&Tensor::zeros(2, 2), &[0, 1], &t, None).unwrap();
        assert!((nll - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dominant_gold_path_has_near_zero_loss() {
        let mut e = Tensor::zeros(3, 3);
        for (l, y) in [2, 0, 1].into_iter().enumerate() {
            e.set(l, y, 100.0);
        }
        let nll = crf_nll(&e, &[2, 0, 1], &Tensor::zeros(5, 5), None).unwrap();
        assert!((0.0..1e-6).contains(&nll));
    }

    #[test]
    fn viterbi_examples() {
        let t = Tensor::zeros(4, 4);
        assert_eq!(viterbi(&Tensor::row(&[2.0, 5.0]), &t, None).unwrap(), vec![1]);
        let e = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut t = Tensor::zeros(4, 4);
        t.set(0, 1, -10.0);
        assert_eq!(viterbi(&e, &t, None).unwrap(), vec![0, 0]);
    }

    #[test]
    fn random_instances_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let len = rng.gen_range(1..=5);
            let k = rng.gen_range(1..=4);
            let (e, t) = random_instance(&mut rng, len, k);
            let z = crf_log_partition(&e, &t).unwrap();
            assert!((z - brute_log_partition(&e, &t, None)).abs() < 1e-9);
            assert_eq!(viterbi(&e, &t, None).unwrap(), brute_argmax(&e, &t, None));
        }
    }

    #[test]
    fn masked_decoding_stays_in_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mask = [false, true, false, true];
        for _ in 0..20 {
            let (e, t) = random_instance(&mut rng, 4, 4);
            let path = viterbi(&e, &t, Some(&mask)).unwrap();
            assert!(path.iter().all(|&y| mask[y]));
            assert_eq!(path, brute_argmax(&e, &t, Some(&mask)));
        }
        let (e, t) = random_instance(&mut rng, 2, 4);
        assert!(viterbi(&e, &t, Some(&[false; 4])).is_err());
        assert!(crf_nll(&e, &[0, 1], &t, Some(&mask)).is_err());
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (e, t) = random_instance(&mut rng, 3, 3);
        let total: f64 = crate::oracle::all_sequences(3, &[0, 1, 2])
            .iter()
            .map(|p| (-crf_nll(&e, p, &t, None).unwrap()).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_shift_moves_partition_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (e, t) = random_instance(&mut rng, 4, 3);
        let mut shifted = e.clone();
        shifted.data_mut().iter_mut().for_each(|v| *v += 0.7);
        let dz = crf_log_partition(&shifted, &t).unwrap() - crf_log_partition(&e, &t).unwrap();
        assert!((dz - 4.0 * 0.7).abs() < 1e-9);
        assert_eq!(viterbi(&shifted, &t, None).unwrap(), viterbi(&e, &t, None).unwrap());
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(transition_l2_penalty(&Tensor::zeros(3, 3), TRANSITION_L2), 0.0);
        let t = Tensor::row(&[2.0, f64::NEG_INFINITY]);
        assert!((transition_l2_penalty(&t, TRANSITION_L2) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn joint_label_space_partitions_labels() {
        let space = JointLabelSpace::new(&[
            ("a", vec!["X".to_string(), "Y".to_string()]),
            ("b", vec!["O".to_string(), "Z".to_string(), "W".to_string()]),
        ]);
        assert_eq!(space.len(), 5);
        assert_eq!(space.labels()[2], "b:O");
        assert_eq!(space.indices(1), vec![2, 3, 4]);
        assert_eq!(space.mask(0), vec![true, true, false, false, false]);
        assert_eq!(space.to_local(1, 3), Some(1));
        assert_eq!(space.to_local(0, 3), None);
        for t in 0..2 {
            assert_eq!(space.mask(t).iter().filter(|&&m| m).count(), space.indices(t).len());
        }
    }

    #[test]
    fn tape_nll_matches_plain_and_masked_versions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let dec = CrfDecoder::register(&mut store, "decoder.shared", 3, 5, &mut rng).unwrap();
        let x = Tensor::matrix(4, 3, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let labels = [1, 3, 4];
        let gold = [3, 1, 4, 4];
        let mut tape = Tape::new(&store);
        let xv = tape.constant(x.clone()).unwrap();
        let e = dec.project(&mut tape, xv).unwrap();
        let loss = dec.nll(&mut tape, e, &gold, &labels).unwrap();
        let emissions = tape.value(e).clone();
        let mask: Vec<bool> = (0..5).map(|j| labels.contains(&j)).collect();
        let plain = crf_nll(&emissions, &gold, store.tensor(dec.transitions), Some(&mask)).unwrap();
        assert!((tape.value(loss).item() - plain).abs() < 1e-10);
        assert!(dec.nll(&mut tape, e, &[0, 1, 4, 4], &labels).is_err());
    }

    #[test]
    fn tape_nll_and_penalty_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut store = ParamStore::new();
        let dec = CrfDecoder::register(&mut store, "d", 3, 4, &mut rng).unwrap();
        let x = Tensor::matrix(3, 3, (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let report = finite_difference_check(&mut store, 1e-5, |tape| {
            let xv = tape.constant(x.clone())?;
            let e = dec.project(tape, xv)?;
            let nll = dec.nll(tape, e, &[0, 2, 2], &[0, 2, 3])?;
            let pen = dec.l2_penalty(tape, TRANSITION_L2)?;
            tape.add(nll, pen)
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-6, "{report:?}");
        // tape penalty agrees with the plain one and has gradient 0.02·t
        let mut tape = Tape::new(&store);
        let p = dec.l2_penalty(&mut tape, TRANSITION_L2).unwrap();
        let t = store.tensor(dec.transitions);
        assert!((tape.value(p).item() - transition_l2_penalty(t, TRANSITION_L2)).abs() < 1e-12);
        let g = tape.backward(p).unwrap();
        for (gv, tv) in g.get(dec.transitions).data().iter().zip(t.data()) {
            let want = if tv.is_finite() { 0.02 * tv } else { 0.0 };
            assert!((gv - want).abs() < 1e-12);
        }
    }

    #[test]
    fn structural_entries_are_negative_infinity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = init_transitions(3, &mut rng);
        for i in 0..5 {
            assert_eq!(t.get(i, 3), f64::NEG_INFINITY);
            assert_eq!(t.get(4, i), f64::NEG_INFINITY);
        }
        assert!(t.get(3, 0).is_finite() && t.get(0, 4).is_finite());
    }
}
