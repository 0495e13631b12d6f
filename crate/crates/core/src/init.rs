//! Parameter initialization schemes.

use rand::Rng;

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    CharEmbedding,
    WeightMatrix,
    Bias,
    UncoveredWordEmbedding,
    TaskEmbedding,
}

/// Half-width of the uniform range used for embeddings of dimension `d`.
pub fn embedding_bound(d: usize) -> f64 {
    (3.0 / d as f64).sqrt()
}

/// Xavier-uniform half-width for a `rows × cols` matrix.
pub fn xavier_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

/// Draw a `rows × cols` tensor. Embeddings use `±√(3/d)` with `d = cols`,
/// weight matrices use Xavier uniform, biases are zero.
pub fn init_parameter<R: Rng + ?Sized>(rows: usize, cols: usize, kind: InitKind, rng: &mut R) -> Tensor {
    let bound = match kind {
        InitKind::Bias => return Tensor::zeros(rows, cols),
        InitKind::WeightMatrix => xavier_bound(rows, cols),
        InitKind::CharEmbedding | InitKind::UncoveredWordEmbedding | InitKind::TaskEmbedding => embedding_bound(cols),
    };
    uniform(rows, cols, bound, rng)
}

pub(crate) fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::matrix(rows, cols, data).expect("positive extents")
}
