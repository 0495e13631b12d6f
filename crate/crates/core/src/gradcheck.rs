//! Central finite-difference verification of tape gradients.

use crate::error::{Error, Result};
use crate::params::{Gradients, ParamStore};
use crate::tape::{Tape, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub entries_checked: usize,
    /// Every compared entry, in parameter order.
    pub entries: Vec<EntryCheck>,
    /// Baseline loss value.
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntryCheck {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl EntryCheck {
    pub fn relative_error(&self) -> f64 {
        let denom = self.analytic.abs().max(self.numeric.abs()).max(1e-8);
        (self.analytic - self.numeric).abs() / denom
    }

    /// `|a − n| ≤ rtol·max(|a|, |n|) + atol`.
    pub fn within(&self, rtol: f64, atol: f64) -> bool {
        (self.analytic - self.numeric).abs() <= rtol * self.analytic.abs().max(self.numeric.abs()) + atol
    }
}

impl GradCheckReport {
    /// Smallest gradient magnitude a central difference can resolve to
    /// relative accuracy `rtol`: one ulp of the loss spread over `2ε`.
    pub fn resolution(&self, epsilon: f64, rtol: f64) -> f64 {
        let ulp = f64::EPSILON * self.loss.abs().max(f64::MIN_POSITIVE);
        ulp / (2.0 * epsilon) / rtol
    }
}

fn eval<F>(store: &ParamStore, loss_fn: &mut F) -> Result<f64>
where
    F: FnMut(&mut Tape<'_>) -> Result<Var>,
{
    let mut tape = Tape::new(store);
    let root = loss_fn(&mut tape)?;
    let v = tape.value(root);
    if v.len() != 1 {
        return Err(Error::contract("loss must be scalar"));
    }
    Ok(v.item())
}

/// Analytic gradients of `loss_fn` at the current parameter values.
pub fn analytic_gradients<F>(store: &ParamStore, loss_fn: &mut F) -> Result<(f64, Gradients)>
where
    F: FnMut(&mut Tape<'_>) -> Result<Var>,
{
    let mut tape = Tape::new(store);
    let root = loss_fn(&mut tape)?;
    let value = tape.value(root).item();
    Ok((value, tape.backward(root)?))
}

/// Compare backward gradients with `(f(x+e) - f(x-e)) / 2e` for every finite
/// entry of every trainable parameter. The relative error of an entry is
/// `|a - n| / max(|a|, |n|, 1e-8)`.
///
/// `loss_fn` must rebuild the loss on the given tape deterministically; two
/// baseline evaluations that differ are rejected.
pub fn finite_difference_check<F>(store: &mut ParamStore, epsilon: f64, mut loss_fn: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<'_>) -> Result<Var>,
{
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(Error::contract("epsilon must be positive"));
    }
    let (base, grads) = analytic_gradients(store, &mut loss_fn)?;
    let again = eval(store, &mut loss_fn)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::contract(format!(
            "loss function is not deterministic ({base} vs {again})"
        )));
    }

    let ids: Vec<_> = store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        entries_checked: 0,
        entries: Vec::new(),
        loss: base,
    };
    for id in ids {
        let n = store.get(id).tensor.len();
        for k in 0..n {
            let orig = store.get(id).tensor.data()[k];
            if !orig.is_finite() {
                continue;
            }
            store.get_mut(id).tensor.data_mut()[k] = orig + epsilon;
            let plus = eval(store, &mut loss_fn);
            store.get_mut(id).tensor.data_mut()[k] = orig - epsilon;
            let minus = eval(store, &mut loss_fn);
            store.get_mut(id).tensor.data_mut()[k] = orig;
            let numeric = (plus? - minus?) / (2.0 * epsilon);
            let entry = EntryCheck {
                name: store.get(id).name.clone(),
                index: k,
                analytic: grads.get(id).data()[k],
                numeric,
            };
            let rel = entry.relative_error();
            report.entries_checked += 1;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = Some((entry.name.clone(), k));
            }
            report.entries.push(entry);
        }
    }
    Ok(report)
}
