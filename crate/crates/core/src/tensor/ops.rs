//! Element-wise, linear-algebra and layout operations.

use super::graph::{Op, Var};
use super::{row_major_strides, Graph, Real, Tensor};
use crate::error::{Error, Result};

/// Batch statistics produced by a training-mode batch normalization, used by
/// callers to update running moments.
#[derive(Clone, Debug)]
pub struct BnStats<T> {
    pub mean: Vec<T>,
    /// Unbiased per-channel variance.
    pub var: Vec<T>,
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` viewed inside `out`, with zero stride along broadcast axes.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let own = row_major_strides(shape);
    let offset = out.len() - shape.len();
    (0..out.len())
        .map(|i| {
            if i < offset || shape[i - offset] == 1 {
                0
            } else {
                own[i - offset]
            }
        })
        .collect()
}

/// Calls `f(out_index, source_index)` for every element of `out`.
fn for_each_broadcast(out: &[usize], src: &[usize], mut f: impl FnMut(usize, usize)) {
    let numel: usize = out.iter().product();
    if out == src {
        (0..numel).for_each(|i| f(i, i));
        return;
    }
    let src_numel: usize = src.iter().product();
    if src_numel == 1 {
        (0..numel).for_each(|i| f(i, 0));
        return;
    }
    // Trailing-suffix broadcast (bias rows): source repeats every src_numel.
    if src.len() <= out.len() && out[out.len() - src.len()..] == *src {
        (0..numel).for_each(|i| f(i, i % src_numel));
        return;
    }
    let strides = broadcast_strides(src, out);
    let rank = out.len();
    let mut idx = vec![0usize; rank];
    let mut s = 0usize;
    for o in 0..numel {
        f(o, s);
        for d in (0..rank).rev() {
            idx[d] += 1;
            s += strides[d];
            if idx[d] < out[d] {
                break;
            }
            s -= strides[d] * out[d];
            idx[d] = 0;
        }
    }
}

pub(crate) fn broadcast_backward<T: Real>(
    g: &Graph<T>,
    v: Var,
    out_shape: &[usize],
    up: &[T],
    grads: &mut [Option<Vec<T>>],
    factor: impl Fn(usize, usize) -> T,
) {
    let shape = g.shape(v).to_vec();
    if let Some(gv) = g.grad_slot(v, grads) {
        for_each_broadcast(out_shape, &shape, |o, s| gv[s] = gv[s] + up[o] * factor(o, s));
    }
}

pub(crate) fn mul_backward<T: Real>(
    g: &Graph<T>,
    a: Var,
    b: Var,
    out_shape: &[usize],
    up: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    let (sa, sb) = (g.shape(a).to_vec(), g.shape(b).to_vec());
    let (va, vb) = (g.value(a).data(), g.value(b).data());
    // Gather the partner value per output element, then scatter.
    if g.requires_grad(a) {
        let mut other = vec![T::zero(); up.len()];
        for_each_broadcast(out_shape, &sb, |o, s| other[o] = vb[s]);
        broadcast_backward(g, a, out_shape, up, grads, |o, _| other[o]);
    }
    if g.requires_grad(b) {
        let mut other = vec![T::zero(); up.len()];
        for_each_broadcast(out_shape, &sa, |o, s| other[o] = va[s]);
        broadcast_backward(g, b, out_shape, up, grads, |o, _| other[o]);
    }
}

pub(crate) fn matmul_backward<T: Real>(
    g: &Graph<T>,
    a: Var,
    b: Var,
    up: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    let (m, k) = (g.shape(a)[0], g.shape(a)[1]);
    let n = g.shape(b)[1];
    let (va, vb) = (g.value(a).data(), g.value(b).data());
    if let Some(ga) = g.grad_slot(a, grads) {
        T::gemm(m, n, k, up, false, vb, true, ga, T::one());
    }
    if let Some(gb) = g.grad_slot(b, grads) {
        T::gemm(k, m, n, va, true, up, false, gb, T::one());
    }
}

pub(crate) fn bmm_backward<T: Real>(
    g: &Graph<T>,
    a: Var,
    b: Var,
    up: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    let (batch, m, k) = (g.shape(a)[0], g.shape(a)[1], g.shape(a)[2]);
    let n = g.shape(b)[2];
    let (va, vb) = (g.value(a).data(), g.value(b).data());
    if let Some(ga) = g.grad_slot(a, grads) {
        for i in 0..batch {
            T::gemm(
                m,
                n,
                k,
                &up[i * m * n..],
                false,
                &vb[i * k * n..],
                true,
                &mut ga[i * m * k..(i + 1) * m * k],
                T::one(),
            );
        }
    }
    if let Some(gb) = g.grad_slot(b, grads) {
        for i in 0..batch {
            T::gemm(
                k,
                m,
                n,
                &va[i * m * k..],
                true,
                &up[i * m * n..],
                false,
                &mut gb[i * k * n..(i + 1) * k * n],
                T::one(),
            );
        }
    }
}

fn permute_data<T: Real>(data: &[T], shape: &[usize], perm: &[usize]) -> (Vec<T>, Vec<usize>) {
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let in_strides = row_major_strides(shape);
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let numel = data.len();
    let mut out = Vec::with_capacity(numel);
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    let mut s = 0usize;
    for _ in 0..numel {
        out.push(data[s]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            s += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            s -= src_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    (out, out_shape)
}

pub(crate) fn permute_backward<T: Real>(
    g: &Graph<T>,
    x: Var,
    perm: &[usize],
    up: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    let mut inverse = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inverse[p] = i;
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| g.shape(x)[p]).collect();
    if let Some(gx) = g.grad_slot(x, grads) {
        let (back, _) = permute_data(up, &out_shape, &inverse);
        gx.iter_mut().zip(back).for_each(|(d, s)| *d = *d + s);
    }
}

/// Splits `shape` around `axis` into (outer, axis length, inner).
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn concat_backward<T: Real>(
    g: &Graph<T>,
    xs: &[Var],
    axis: usize,
    up: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    let total: usize = xs.iter().map(|x| g.shape(*x)[axis]).sum();
    let (outer, _, inner) = axis_split(g.shape(xs[0]), axis);
    let mut offset = 0;
    for &x in xs {
        let len = g.shape(x)[axis];
        if let Some(gx) = g.grad_slot(x, grads) {
            for o in 0..outer {
                let src = &up[(o * total + offset) * inner..(o * total + offset + len) * inner];
                let dst = &mut gx[o * len * inner..(o + 1) * len * inner];
                dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
            }
        }
        offset += len;
    }
}

pub(crate) fn narrow_backward<T: Real>(
    g: &Graph<T>,
    x: Var,
    axis: usize,
    start: usize,
    out_shape: &[usize],
    up: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    let (outer, full, inner) = axis_split(g.shape(x), axis);
    let len = out_shape[axis];
    if let Some(gx) = g.grad_slot(x, grads) {
        for o in 0..outer {
            let dst = &mut gx[(o * full + start) * inner..(o * full + start + len) * inner];
            let src = &up[o * len * inner..(o + 1) * len * inner];
            dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
        }
    }
}

pub(crate) fn softmax_backward<T: Real>(
    g: &Graph<T>,
    x: Var,
    axis: usize,
    out: &Tensor<T>,
    up: &[T],
    grads: &mut [Option<Vec<T>>],
    log: bool,
) {
    let (outer, len, inner) = axis_split(out.shape(), axis);
    let y = out.data();
    if let Some(gx) = g.grad_slot(x, grads) {
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                if log {
                    let total: T = (0..len).map(|k| up[at(k)]).sum();
                    for k in 0..len {
                        gx[at(k)] = gx[at(k)] + up[at(k)] - y[at(k)].exp() * total;
                    }
                } else {
                    let dot: T = (0..len).map(|k| up[at(k)] * y[at(k)]).sum();
                    for k in 0..len {
                        gx[at(k)] = gx[at(k)] + y[at(k)] * (up[at(k)] - dot);
                    }
                }
            }
        }
    }
}

impl<T: Real> Graph<T> {
    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out_shape = broadcast_shape(&sa, &sb).ok_or(Error::Dimension {
            op: name,
            lhs: sa.clone(),
            rhs: sb.clone(),
        })?;
        let numel: usize = out_shape.iter().product();
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![T::zero(); numel];
        if sa == out_shape {
            for_each_broadcast(&out_shape, &sb, |o, s| out[o] = f(va[o], vb[s]));
        } else {
            let mut av = vec![T::zero(); numel];
            for_each_broadcast(&out_shape, &sa, |o, s| av[o] = va[s]);
            for_each_broadcast(&out_shape, &sb, |o, s| out[o] = f(av[o], vb[s]));
        }
        Tensor::new(out_shape, out)
    }

    /// Element-wise sum with broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let t = self.value(x).map(|v| v * c);
        self.push(t, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let t = self.value(x).map(|v| v + c);
        self.push(t, Op::AddScalar(x))
    }

    /// Product of two matrices `[m, k] x [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, T::zero());
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::MatMul(a, b)))
    }

    /// Batched product `[b, m, k] x [b, k, n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::Dimension {
                op: "bmm",
                lhs: sa,
                rhs: sb,
            });
        }
        let (batch, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![T::zero(); batch * m * n];
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        for i in 0..batch {
            T::gemm(
                m,
                k,
                n,
                &va[i * m * k..],
                false,
                &vb[i * k * n..],
                false,
                &mut out[i * m * n..(i + 1) * m * n],
                T::zero(),
            );
        }
        let t = Tensor::new(vec![batch, m, n], out)?;
        Ok(self.push(t, Op::Bmm(a, b)))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Dimension {
                op: "permute",
                lhs: shape,
                rhs: perm.to_vec(),
            });
        }
        let (data, out_shape) = permute_data(self.value(x).data(), &shape, perm);
        let t = Tensor::new(out_shape, data)?;
        Ok(self.push(t, Op::Permute(x, perm.to_vec())))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(*xs.first().ok_or_else(|| Error::shape("concat", "no inputs"))?).to_vec();
        if axis >= first.len() {
            return Err(Error::shape("concat", format!("axis {axis} out of range for {first:?}")));
        }
        for &x in &xs[1..] {
            let s = self.shape(x);
            let compatible = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(Error::Dimension {
                    op: "concat",
                    lhs: first,
                    rhs: s.to_vec(),
                });
            }
        }
        let total: usize = xs.iter().map(|x| self.shape(*x)[axis]).sum();
        let (outer, _, inner) = axis_split(&first, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &x in xs {
                let len = self.shape(x)[axis];
                out.extend_from_slice(&self.value(x).data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::Concat(xs.to_vec(), axis)))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::shape(
                "narrow",
                format!("[{start}, {}) along axis {axis} of {shape:?}", start + len),
            ));
        }
        let (outer, full, inner) = axis_split(&shape, axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        let data = self.value(x).data();
        for o in 0..outer {
            out.extend_from_slice(&data[(o * full + start) * inner..(o * full + start + len) * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let t = Tensor::new(out_shape, out)?;
        Ok(self.push(t, Op::Narrow { x, axis, start }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(t, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| v.tanh());
        self.push(t, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x).map(sigmoid);
        self.push(t, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| v.exp());
        self.push(t, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| v.ln());
        self.push(t, Op::Log(x))
    }

    fn softmax_impl(&mut self, x: Var, axis: usize, log: bool) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape("softmax", format!("axis {axis} out of range for {shape:?}")));
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let data = self.value(x).data();
        let mut out = vec![T::zero(); data.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let max = (0..len).map(|k| data[at(k)]).fold(T::neg_infinity(), T::max);
                let total: T = (0..len).map(|k| (data[at(k)] - max).exp()).sum();
                let log_total = total.ln();
                for k in 0..len {
                    let shifted = data[at(k)] - max;
                    out[at(k)] = if log { shifted - log_total } else { shifted.exp() / total };
                }
            }
        }
        let t = Tensor::new(shape, out)?;
        let op = if log { Op::LogSoftmax(x, axis) } else { Op::Softmax(x, axis) };
        Ok(self.push(t, op))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.softmax_impl(x, axis, false)
    }

    /// Log-softmax via the max-shift formulation.
    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.softmax_impl(x, axis, true)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total: T = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let total: T = v.data().iter().copied().sum();
        let mean = total / T::from_usize(v.numel().max(1)).unwrap();
        self.push(Tensor::scalar(mean), Op::Mean(x))
    }

    /// `-sum(weight * logp[index]) ` over the picked flat indices.
    pub fn nll_gather(&mut self, logp: Var, picks: Vec<(usize, T)>) -> Result<Var> {
        let data = self.value(logp).data();
        let mut total = T::zero();
        for &(idx, w) in &picks {
            let v = *data.get(idx).ok_or_else(|| {
                Error::shape("nll_gather", format!("index {idx} outside {} values", data.len()))
            })?;
            total = total - w * v;
        }
        Ok(self.push(Tensor::scalar(total), Op::NllGather { logp, picks }))
    }
}

pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_zero() {
        let m = t(&[3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        let mut g = Graph::new();
        let eye = g.constant(Tensor::from_fn(vec![3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 }));
        let mv = g.constant(m.clone());
        let p = g.matmul(eye, mv).unwrap();
        assert_eq!(g.value(p), &m);
        let z = g.constant(Tensor::zeros(vec![3, 3]));
        let p = g.matmul(z, mv).unwrap();
        assert!(g.value(p).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut naive = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    naive[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
                }
            }
        }
        let mut g = Graph::new();
        let (va, vb) = (g.constant(t(&[3, 3], &a)), g.constant(t(&[3, 3], &b)));
        let p = g.matmul(va, vb).unwrap();
        for (x, y) in g.value(p).data().iter().zip(naive) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(vec![2, 3]));
        let b = g.constant(Tensor::zeros(vec![4, 2]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[4, 2]"), "{err}");
    }

    #[test]
    fn broadcasting_bias_and_middle_axis() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
        let b = g.constant(t(&[3], &[10., 20., 30.]));
        let y = g.add(x, b).unwrap();
        assert_eq!(g.value(y).data(), &[11., 22., 33., 14., 25., 36.]);
        let c = g.constant(t(&[2, 1], &[1., -1.]));
        let y = g.mul(x, c).unwrap();
        assert_eq!(g.value(y).data(), &[1., 2., 3., -4., -5., -6.]);
        let bad = g.constant(Tensor::zeros(vec![4]));
        assert!(g.add(x, bad).is_err());
    }

    #[test]
    fn softmax_uniform_and_normalized() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::full(vec![5], 0.7));
        let s = g.softmax(x, 0).unwrap();
        assert!(g.value(s).data().iter().all(|&v| (v - 0.2).abs() < 1e-15));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f64> = (0..12).map(|_| rng.random_range(-30.0..30.0)).collect();
        let x = g.constant(t(&[3, 4], &data));
        let s = g.softmax(x, 1).unwrap();
        for row in g.value(s).data().chunks(4) {
            let total: f64 = row.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
        // exp/sum oracle on row 0
        let max = data[..4].iter().cloned().fold(f64::MIN, f64::max);
        let denom: f64 = data[..4].iter().map(|v| (v - max).exp()).sum();
        for k in 0..4 {
            let expected = (data[k] - max).exp() / denom;
            assert!((g.value(s).data()[k] - expected).abs() < 1e-15);
        }
        let ls = g.log_softmax(x, 1).unwrap();
        for (a, b) in g.value(ls).data().iter().zip(g.value(s).data()) {
            assert!((a.exp() - b).abs() < 1e-14);
        }
    }

    #[test]
    fn relu_zeroes_negatives() {
        let mut g = Graph::new();
        let x = g.constant(t(&[3], &[-2., 0.5, -0.1]));
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0., 0.5, 0.]);
    }

    #[test]
    fn permute_and_narrow_round_trip() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_fn(vec![2, 3, 4], |i| i as f64));
        let p = g.permute(x, &[2, 0, 1]).unwrap();
        assert_eq!(g.shape(p), &[4, 2, 3]);
        let back = g.permute(p, &[1, 2, 0]).unwrap();
        assert_eq!(g.value(back), g.value(x));
        let n = g.narrow(x, 2, 1, 2).unwrap();
        assert_eq!(g.value(n).data()[..4], [1., 2., 5., 6.]);
        let c = g.concat(&[n, n], 2).unwrap();
        assert_eq!(g.shape(c), &[2, 3, 4]);
    }
}
