//! AdaDelta and gradient clipping.

use crate::tensor::{ParamId, ParamStore, Real};

use super::config::ClipMode;

/// Running averages `E[g²]` and `E[Δx²]` per trainable tensor.
#[derive(Clone, Debug)]
pub struct AdaDelta {
    pub rho: f64,
    pub eps: f64,
    pub lr: f64,
    acc_grad: Vec<Vec<f64>>,
    acc_delta: Vec<Vec<f64>>,
}

impl AdaDelta {
    pub fn new<T: Real>(store: &ParamStore<T>, rho: f64, eps: f64, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = store.ids().map(|id| vec![0.0; store.get(id).numel()]).collect();
        AdaDelta {
            rho,
            eps,
            lr,
            acc_grad: zeros.clone(),
            acc_delta: zeros,
        }
    }

    /// Applies one update in place. Parameters without a gradient entry are
    /// left untouched along with their state.
    pub fn step<T: Real>(&mut self, store: &mut ParamStore<T>, grads: &[(ParamId, Vec<T>)]) {
        let (rho, eps) = (self.rho, self.eps);
        for (id, g) in grads {
            if store.is_buffer(*id) {
                continue;
            }
            let eg = &mut self.acc_grad[id.index()];
            let ed = &mut self.acc_delta[id.index()];
            let p = store.get_mut(*id).data_mut();
            for i in 0..g.len() {
                let gi = g[i].to_f64().unwrap();
                eg[i] = rho * eg[i] + (1.0 - rho) * gi * gi;
                let dx = -((ed[i] + eps).sqrt() / (eg[i] + eps).sqrt()) * gi;
                ed[i] = rho * ed[i] + (1.0 - rho) * dx * dx;
                p[i] = T::lit(p[i].to_f64().unwrap() + self.lr * dx);
            }
        }
    }
}

/// L2 norm of the concatenated gradients.
pub fn grad_norm<T: Real>(grads: &[(ParamId, Vec<T>)]) -> f64 {
    grads
        .iter()
        .flat_map(|(_, g)| g.iter())
        .map(|v| {
            let v = v.to_f64().unwrap();
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

fn rescale<T: Real>(g: &mut [T], norm: f64, max: f64) {
    if norm > max {
        let k = T::lit(max / norm);
        g.iter_mut().for_each(|v| *v = *v * k);
    }
}

/// Caps the gradient norm at `max`; returns the norm before clipping.
pub fn clip_gradients<T: Real>(grads: &mut [(ParamId, Vec<T>)], max: f64, mode: ClipMode) -> f64 {
    let total = grad_norm(grads);
    match mode {
        ClipMode::GlobalNorm => grads.iter_mut().for_each(|(_, g)| rescale(g, total, max)),
        ClipMode::PerParameter => {
            for entry in grads.iter_mut() {
                let n = grad_norm(std::slice::from_ref(entry));
                rescale(&mut entry.1, n, max);
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Init;

    fn scalar_store() -> (ParamStore<f64>, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("x", &[1], Init::Zeros).unwrap();
        (s, id)
    }

    #[test]
    fn adadelta_hand_recurrence() {
        let (mut store, id) = scalar_store();
        let mut opt = AdaDelta::new(&store, 0.95, 1e-6, 1.0);
        opt.step(&mut store, &[(id, vec![1.0])]);
        let first = store.get(id).data()[0];
        let want = -(1e-6f64).sqrt() / (0.05f64 + 1e-6).sqrt();
        assert!((first - want).abs() < 1e-15);
        opt.step(&mut store, &[(id, vec![1.0])]);
        let second = store.get(id).data()[0] - first;
        assert!(second.abs() > first.abs());
    }

    #[test]
    fn zero_gradient_zero_update() {
        let (mut store, id) = scalar_store();
        let mut opt = AdaDelta::new(&store, 0.95, 1e-6, 1.0);
        opt.step(&mut store, &[(id, vec![0.0])]);
        assert_eq!(store.get(id).data()[0], 0.0);
    }

    #[test]
    fn clipping_examples() {
        let (_, id) = scalar_store();
        let mut g = vec![(id, vec![6.0f64, 8.0])];
        assert_eq!(clip_gradients(&mut g, 5.0, ClipMode::GlobalNorm), 10.0);
        assert!((grad_norm(&g) - 5.0).abs() < 1e-12);
        let mut g = vec![(id, vec![0.0f64, 3.0])];
        clip_gradients(&mut g, 5.0, ClipMode::GlobalNorm);
        assert_eq!(g[0].1, vec![0.0, 3.0]);
        let mut g = vec![(id, vec![4.0f64]), (id, vec![4.0])];
        clip_gradients(&mut g, 5.0, ClipMode::PerParameter);
        assert_eq!(g[0].1, vec![4.0]);
    }
}
