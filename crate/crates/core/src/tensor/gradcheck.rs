//! Central finite-difference gradient checks.

use super::{Graph, ParamStore, Session, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of [`grad_check`].
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    /// Input index and flat element index where the maximum occurred.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tol
    }
}

/// Denominator floor, per unit of `max(1, |f|)`, so gradients that are zero
/// up to the round-off of the difference quotient are not scored as ratios.
const REL_FLOOR: f64 = 1e-6;

fn floor_for(value: f64) -> f64 {
    REL_FLOOR * value.abs().max(1.0)
}

/// Compares the recorded gradient of a scalar function against central
/// differences `(f(x + eps) - f(x - eps)) / 2eps` for every element of every
/// input. `f` receives one gradient-tracking leaf per input.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = f(&mut g, &vars)?;
    let floor = floor_for(g.value(out).item());
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        tol,
    };
    let mut probe = inputs.to_vec();
    for (k, grads) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let orig = probe[k].data()[i];
            probe[k].data_mut()[i] = orig + eps;
            let up = eval(&probe)?;
            probe[k].data_mut()[i] = orig - eps;
            let down = eval(&probe)?;
            probe[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            if !numeric.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite difference quotient at input {k} element {i}"
                )));
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = rel;
                report.worst = Some((k, i));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

/// [`grad_check`] over the trainable tensors of a store. `f` builds the
/// scalar from a training-mode session; at most `per_tensor` evenly spaced
/// elements of each tensor are probed (all when `None`).
pub fn grad_check_params<F>(
    store: &mut ParamStore<f64>,
    f: F,
    eps: f64,
    tol: f64,
    per_tensor: Option<usize>,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Session<f64>) -> Result<Var>,
{
    let eval = |store: &ParamStore<f64>| -> Result<f64> {
        let mut s = Session::new(store, true).with_grads(false);
        let out = f(&mut s)?;
        Ok(s.g.value(out).item())
    };
    let analytic = {
        let mut s = Session::new(store, true);
        let out = f(&mut s)?;
        let floor = floor_for(s.g.value(out).item());
        s.g.backward(out)?;
        (s.param_grads(), floor)
    };
    let (analytic, floor) = analytic;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        tol,
    };
    let ids: Vec<_> = store.trainable_ids().collect();
    for id in ids {
        let n = store.get(id).numel();
        let grad = analytic.iter().find(|(g, _)| *g == id).map(|(_, g)| g.clone());
        let grad = grad.unwrap_or_else(|| vec![0.0; n]);
        let step = per_tensor.map_or(1, |k| n.div_ceil(k.max(1)).max(1));
        for i in (0..n).step_by(step) {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + eps;
            let up = eval(store)?;
            store.get_mut(id).data_mut()[i] = orig - eps;
            let down = eval(store)?;
            store.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            if !numeric.is_finite() {
                return Err(Error::Numeric(format!("non-finite difference quotient at {} element {i}", store.name(id))));
            }
            let a = grad[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = rel;
                report.worst = Some((id.index(), i));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
