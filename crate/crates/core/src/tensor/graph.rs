use super::conv::{self, ConvGeom, PoolGeom};
use super::{ops, special, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    MatMul(Var, Var),
    Bmm(Var, Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Concat(Vec<Var>, usize),
    Narrow { x: Var, axis: usize, start: usize },
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
    Sum(Var),
    Mean(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        cols: Option<Vec<T>>,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    AvgPoolAll(Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        train: bool,
    },
    Bilinear {
        img: Var,
        grid: Var,
    },
    /// Scalar whose gradient was produced alongside its value.
    Fused {
        input: Var,
        grad: Vec<T>,
    },
    NllGather {
        logp: Var,
        picks: Vec<(usize, T)>,
    },
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
    pub(crate) requires_grad: bool,
    pub(crate) grad: Option<Vec<T>>,
}

/// Recording of a forward computation.
///
/// Leaf gradients accumulate across [`Graph::backward`] calls until
/// [`Graph::zero_grads`] resets them. A graph is single-threaded; build one
/// graph per worker for parallel evaluation.
pub struct Graph<T: Real> {
    pub(crate) nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input value. Gradients are collected for it when
    /// `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let requires_grad = self.op_inputs(&op).iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn op_inputs(&self, op: &Op<T>) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) | Op::Bmm(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(x, _)
            | Op::AddScalar(x)
            | Op::Reshape(x)
            | Op::Permute(x, _)
            | Op::Relu(x)
            | Op::Tanh(x)
            | Op::Sigmoid(x)
            | Op::Exp(x)
            | Op::Log(x)
            | Op::Softmax(x, _)
            | Op::LogSoftmax(x, _)
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::AvgPoolAll(x) => vec![*x],
            Op::Narrow { x, .. } | Op::MaxPool { x, .. } => vec![*x],
            Op::Concat(xs, _) => xs.clone(),
            Op::Conv2d { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b.iter().copied());
                v
            }
            Op::BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Bilinear { img, grid } => vec![*img, *grid],
            Op::Fused { input: logp, .. } | Op::NllGather { logp, .. } => vec![*logp],
        }
    }

    /// Reverse pass from a scalar. Every node is visited at most once, in
    /// reverse creation order.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        if !self.nodes[loss.0].requires_grad {
            return Err(Error::State(
                "loss is not connected to any tensor that requires a gradient".into(),
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);
        let mut leaf_grads: Vec<(usize, Vec<T>)> = Vec::new();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                leaf_grads.push((i, g));
            } else {
                self.backprop(i, &g, &mut grads)?;
            }
        }
        for (i, g) in leaf_grads {
            match &mut self.nodes[i].grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn backprop(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                ops::broadcast_backward(self, *a, out.shape(), g, grads, |_, _| T::one());
                ops::broadcast_backward(self, *b, out.shape(), g, grads, |_, _| T::one());
            }
            Op::Sub(a, b) => {
                ops::broadcast_backward(self, *a, out.shape(), g, grads, |_, _| T::one());
                ops::broadcast_backward(self, *b, out.shape(), g, grads, |_, _| -T::one());
            }
            Op::Mul(a, b) => ops::mul_backward(self, *a, *b, out.shape(), g, grads),
            Op::Scale(x, c) => {
                if let Some(gx) = self.grad_slot(*x, grads) {
                    gx.iter_mut().zip(g).for_each(|(d, &s)| *d = *d + s * *c);
                }
            }
            Op::AddScalar(x) | Op::Reshape(x) => {
                if let Some(gx) = self.grad_slot(*x, grads) {
                    gx.iter_mut().zip(g).for_each(|(d, &s)| *d = *d + s);
                }
            }
            Op::MatMul(a, b) => ops::matmul_backward(self, *a, *b, g, grads),
            Op::Bmm(a, b) => ops::bmm_backward(self, *a, *b, g, grads),
            Op::Permute(x, perm) => ops::permute_backward(self, *x, perm, g, grads),
            Op::Concat(xs, axis) => ops::concat_backward(self, xs, *axis, g, grads),
            Op::Narrow { x, axis, start } => {
                ops::narrow_backward(self, *x, *axis, *start, out.shape(), g, grads)
            }
            Op::Relu(x) => {
                let xv = self.nodes[x.0].value.data();
                if let Some(gx) = self.grad_slot(*x, grads) {
                    for ((d, &s), &v) in gx.iter_mut().zip(g).zip(xv) {
                        if v > T::zero() {
                            *d = *d + s;
                        }
                    }
                }
            }
            Op::Tanh(x) => {
                if let Some(gx) = self.grad_slot(*x, grads) {
                    for ((d, &s), &y) in gx.iter_mut().zip(g).zip(out.data()) {
                        *d = *d + s * (T::one() - y * y);
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(gx) = self.grad_slot(*x, grads) {
                    for ((d, &s), &y) in gx.iter_mut().zip(g).zip(out.data()) {
                        *d = *d + s * y * (T::one() - y);
                    }
                }
            }
            Op::Exp(x) => {
                if let Some(gx) = self.grad_slot(*x, grads) {
                    for ((d, &s), &y) in gx.iter_mut().zip(g).zip(out.data()) {
                        *d = *d + s * y;
                    }
                }
            }
            Op::Log(x) => {
                let xv = self.nodes[x.0].value.data();
                if let Some(gx) = self.grad_slot(*x, grads) {
                    for ((d, &s), &v) in gx.iter_mut().zip(g).zip(xv) {
                        *d = *d + s / v;
                    }
                }
            }
            Op::Softmax(x, axis) => ops::softmax_backward(self, *x, *axis, out, g, grads, false),
            Op::LogSoftmax(x, axis) => ops::softmax_backward(self, *x, *axis, out, g, grads, true),
            Op::Sum(x) => {
                if let Some(gx) = self.grad_slot(*x, grads) {
                    gx.iter_mut().for_each(|d| *d = *d + g[0]);
                }
            }
            Op::Mean(x) => {
                let n = T::from_usize(self.nodes[x.0].value.numel()).unwrap();
                if let Some(gx) = self.grad_slot(*x, grads) {
                    gx.iter_mut().for_each(|d| *d = *d + g[0] / n);
                }
            }
            Op::Conv2d { x, w, b, geom, cols } => {
                conv::conv2d_backward(self, *x, *w, *b, geom, cols.as_deref(), g, grads)
            }
            Op::MaxPool { x, argmax } => {
                if let Some(gx) = self.grad_slot(*x, grads) {
                    for (&src, &s) in argmax.iter().zip(g) {
                        gx[src] = gx[src] + s;
                    }
                }
            }
            Op::AvgPoolAll(x) => conv::avgpool_backward(self, *x, g, grads),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => special::batchnorm_backward(
                self, *x, *gamma, *beta, xhat, inv_std, *train, g, grads,
            ),
            Op::Bilinear { img, grid } => special::bilinear_backward(self, *img, *grid, g, grads),
            Op::Fused { input: logp, grad } => {
                if let Some(gx) = self.grad_slot(*logp, grads) {
                    for (d, &v) in gx.iter_mut().zip(grad) {
                        *d = *d + v * g[0];
                    }
                }
            }
            Op::NllGather { logp, picks } => {
                if let Some(gx) = self.grad_slot(*logp, grads) {
                    for &(idx, wgt) in picks {
                        gx[idx] = gx[idx] - wgt * g[0];
                    }
                }
            }
        }
        Ok(())
    }

    /// Mutable gradient buffer for `v`, allocated on first use. `None` when
    /// `v` does not participate in differentiation.
    pub(crate) fn grad_slot<'g>(
        &self,
        v: Var,
        grads: &'g mut [Option<Vec<T>>],
    ) -> Option<&'g mut Vec<T>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.numel();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
    }

    pub(crate) fn conv_geom(&self, x: Var, w: Var, stride: (usize, usize), padding: (usize, usize)) -> Result<ConvGeom> {
        ConvGeom::new(self.shape(x), self.shape(w), stride, padding)
    }

    pub(crate) fn pool_geom(
        &self,
        x: Var,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<PoolGeom> {
        PoolGeom::new(self.shape(x), kernel, stride, padding)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_requires_scalar_loss() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros(vec![2]), true);
        let y = g.scale(x, 2.0);
        assert!(g.backward(y).is_err());
    }

    #[test]
    fn backward_requires_connected_loss() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(vec![2]));
        let s = g.sum(x);
        assert!(matches!(g.backward(s), Err(Error::State(_))));
    }

    #[test]
    fn gradients_accumulate_until_reset() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap(), true);
        let s = g.sum(x);
        g.backward(s).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 2.0, 2.0]);
        g.zero_grads();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn shared_subexpression_matches_unrolled_copy() {
        // f(x) = sum(tanh(x) * tanh(x)) through one shared node ...
        let data = vec![0.3, -1.2, 0.7];
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(vec![3], data.clone()).unwrap(), true);
        let t = g.tanh(x);
        let p = g.mul(t, t).unwrap();
        let s = g.sum(p);
        g.backward(s).unwrap();
        let shared = g.grad(x).unwrap().to_vec();

        // ... versus two independently recorded copies of the subexpression.
        let mut h = Graph::<f64>::new();
        let y = h.leaf(Tensor::new(vec![3], data).unwrap(), true);
        let t1 = h.tanh(y);
        let t2 = h.tanh(y);
        let p = h.mul(t1, t2).unwrap();
        let s = h.sum(p);
        h.backward(s).unwrap();
        assert_eq!(shared, h.grad(y).unwrap());
    }
}
