//! Adam and global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::params::{Gradients, ParamStore};
use crate::tensor::Tensor;

/// Scale all gradients by `threshold / ‖g‖` when the global L2 norm exceeds
/// `threshold`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, threshold: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > threshold {
        let k = threshold / norm;
        for g in grads.tensors_mut() {
            g.scale_assign(k);
        }
    }
    norm
}

/// Bias-corrected Adam with per-parameter moment estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Adam {
        let zeros: Vec<Tensor> = store.iter().map(|(_, p)| p.tensor.zeros_like()).collect();
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update of every trainable parameter. Non-finite parameter
    /// entries (fixed structural values) are left untouched.
    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((_, p), g), (m, v)) in store
            .iter_mut()
            .zip(grads.tensors())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if !p.trainable {
                continue;
            }
            let data = p.tensor.data_mut();
            let (m, v) = (m.data_mut(), v.data_mut());
            for (i, &gi) in g.data().iter().enumerate() {
                if !data[i].is_finite() {
                    continue;
                }
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(values: &[f64]) -> (ParamStore, Gradients) {
        let mut store = ParamStore::new();
        store.insert("x", Tensor::row(values), true).unwrap();
        let grads = Gradients::zeros_for(&store);
        (store, grads)
    }

    #[test]
    fn clipping_examples() {
        let (_, mut g) = one_param(&[0.0, 0.0]);
        g.tensors_mut()[0] = Tensor::row(&[3.0, 4.0]);
        assert_eq!(clip_global_norm(&mut g, 5.0), 5.0);
        assert_eq!(g.tensors()[0].data(), &[3.0, 4.0]);
        g.tensors_mut()[0] = Tensor::row(&[6.0, 8.0]);
        clip_global_norm(&mut g, 5.0);
        assert_eq!(g.tensors()[0].data(), &[3.0, 4.0]);
        g.tensors_mut()[0] = Tensor::row(&[0.0, 0.0]);
        clip_global_norm(&mut g, 5.0);
        assert_eq!(g.tensors()[0].data(), &[0.0, 0.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut store, mut g) = one_param(&[1.0, -1.0]);
        g.tensors_mut()[0] = Tensor::row(&[0.5, -3.0]);
        let mut adam = Adam::new(&store, 0.001, 0.9, 0.999, 1e-8);
        adam.update(&mut store, &g);
        let x = store.tensor(crate::params::ParamId(0)).data();
        assert!((x[0] - 0.999).abs() < 1e-10);
        assert!((x[1] + 0.999).abs() < 1e-10);
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let (mut store, g) = one_param(&[0.3, f64::NEG_INFINITY]);
        let before = store.clone();
        let mut adam = Adam::new(&store, 0.001, 0.9, 0.999, 1e-8);
        adam.update(&mut store, &g);
        assert_eq!(store, before);
    }

    #[test]
    fn quadratic_matches_hand_stepped_trace() {
        // f(x) = x², g = 2x, lr 0.1, default betas, from x = 1
        let (mut store, mut g) = one_param(&[1.0]);
        let mut adam = Adam::new(&store, 0.1, 0.9, 0.999, 1e-8);
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=10 {
            let gx = 2.0 * x;
            m = 0.9 * m + 0.1 * gx;
            v = 0.999 * v + 0.001 * gx * gx;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);

            let cur = store.tensor(crate::params::ParamId(0)).item();
            g.tensors_mut()[0] = Tensor::row(&[2.0 * cur]);
            adam.update(&mut store, &g);
            // the oracle writes 0.1 where the optimizer computes 1 − 0.9
            let got = store.tensor(crate::params::ParamId(0)).item();
            assert!((got - x).abs() < 1e-12, "step {t}: {got} vs {x}");
        }
        // the first ten steps each move roughly lr toward the minimum
        assert!(x < 0.2 && x > -0.2, "{x}");
    }
}
