//! Convolution and pooling over `[N, C, H, W]` (or unbatched `[C, H, W]`) maps.

use super::graph::{Op, Var};
use super::{Graph, Real, Tensor};
use crate::error::{Error, Result};

fn split_map(shape: &[usize], op: &str) -> Result<(bool, [usize; 4])> {
    match *shape {
        [c, h, w] => Ok((false, [1, c, h, w])),
        [n, c, h, w] => Ok((true, [n, c, h, w])),
        _ => Err(Error::shape(op, format!("expected [C,H,W] or [N,C,H,W], got {shape:?}"))),
    }
}

/// Output length of a sliding window, or `None` when the window does not fit.
fn window_out(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<(usize, usize)> {
    let padded = len + 2 * pad;
    if stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    let span = padded - kernel;
    Some((span / stride + 1, span % stride))
}

#[derive(Clone, Debug)]
pub(crate) struct ConvGeom {
    batched: bool,
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    pub(crate) fn new(
        x: &[usize],
        weight: &[usize],
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Self> {
        let (batched, [n, c_in, h, w]) = split_map(x, "conv2d")?;
        let [c_out, wc, kh, kw] = *weight else {
            return Err(Error::shape("conv2d", format!("weight must be [C_out,C_in,kh,kw], got {weight:?}")));
        };
        if wc != c_in {
            return Err(Error::Dimension {
                op: "conv2d",
                lhs: x.to_vec(),
                rhs: weight.to_vec(),
            });
        }
        let fit = |len, k, s, p, axis| {
            let (out, rem) = window_out(len, k, s, p).ok_or_else(|| {
                Error::shape("conv2d", format!("kernel {k} stride {s} padding {p} does not fit {axis} {len}"))
            })?;
            if rem != 0 {
                return Err(Error::shape(
                    "conv2d",
                    format!("non-integral {axis} output: ({len} + 2*{p} - {k}) / {s} + 1"),
                ));
            }
            Ok(out)
        };
        let ho = fit(h, kh, stride.0, padding.0, "height")?;
        let wo = fit(w, kw, stride.1, padding.1, "width")?;
        Ok(ConvGeom {
            batched,
            n,
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            sh: stride.0,
            sw: stride.1,
            ph: padding.0,
            pw: padding.1,
            ho,
            wo,
        })
    }

    fn k(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.ho * self.wo
    }

    fn out_shape(&self) -> Vec<usize> {
        if self.batched {
            vec![self.n, self.c_out, self.ho, self.wo]
        } else {
            vec![self.c_out, self.ho, self.wo]
        }
    }

    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let p = self.positions();
        for c in 0..self.c_in {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = ((c * self.kh + ki) * self.kw + kj) * p;
                    for oh in 0..self.ho {
                        let ih = (oh * self.sh + ki) as isize - self.ph as isize;
                        let dst = &mut cols[row + oh * self.wo..row + (oh + 1) * self.wo];
                        if ih < 0 || ih >= self.h as isize {
                            dst.iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let src = &plane[ih as usize * self.w..(ih as usize + 1) * self.w];
                        for (ow, d) in dst.iter_mut().enumerate() {
                            let iw = (ow * self.sw + kj) as isize - self.pw as isize;
                            *d = if iw < 0 || iw >= self.w as isize { T::zero() } else { src[iw as usize] };
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Real>(&self, cols: &[T], dx: &mut [T]) {
        let p = self.positions();
        for c in 0..self.c_in {
            let plane = &mut dx[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = ((c * self.kh + ki) * self.kw + kj) * p;
                    for oh in 0..self.ho {
                        let ih = (oh * self.sh + ki) as isize - self.ph as isize;
                        if ih < 0 || ih >= self.h as isize {
                            continue;
                        }
                        let src = &cols[row + oh * self.wo..row + (oh + 1) * self.wo];
                        let dst = &mut plane[ih as usize * self.w..(ih as usize + 1) * self.w];
                        for (ow, &s) in src.iter().enumerate() {
                            let iw = (ow * self.sw + kj) as isize - self.pw as isize;
                            if iw >= 0 && iw < self.w as isize {
                                dst[iw as usize] = dst[iw as usize] + s;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_backward<T: Real>(
    g: &Graph<T>,
    x: Var,
    w: Var,
    b: Option<Var>,
    geom: &ConvGeom,
    cols: Option<&[T]>,
    up: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    let (k, p, c_out) = (geom.k(), geom.positions(), geom.c_out);
    let in_size = geom.c_in * geom.h * geom.w;
    let wv = g.value(w).data();
    if let Some(b) = b {
        if let Some(gb) = g.grad_slot(b, grads) {
            for n in 0..geom.n {
                for co in 0..c_out {
                    let row = &up[(n * c_out + co) * p..(n * c_out + co + 1) * p];
                    gb[co] = gb[co] + row.iter().copied().sum();
                }
            }
        }
    }
    if g.requires_grad(w) {
        let xv = g.value(x).data();
        let mut gw_acc = vec![T::zero(); c_out * k];
        let mut scratch = vec![T::zero(); k * p];
        for n in 0..geom.n {
            let sample_cols: &[T] = match cols {
                Some(cached) => &cached[n * k * p..(n + 1) * k * p],
                None => {
                    geom.im2col(&xv[n * in_size..(n + 1) * in_size], &mut scratch);
                    &scratch
                }
            };
            T::gemm(c_out, p, k, &up[n * c_out * p..], false, sample_cols, true, &mut gw_acc, T::one());
        }
        if let Some(gw) = g.grad_slot(w, grads) {
            gw.iter_mut().zip(gw_acc).for_each(|(d, s)| *d = *d + s);
        }
    }
    if g.requires_grad(x) {
        let mut dcols = vec![T::zero(); k * p];
        let mut dx = vec![T::zero(); geom.n * in_size];
        for n in 0..geom.n {
            T::gemm(k, c_out, p, wv, true, &up[n * c_out * p..], false, &mut dcols, T::zero());
            geom.col2im(&dcols, &mut dx[n * in_size..(n + 1) * in_size]);
        }
        if let Some(gx) = g.grad_slot(x, grads) {
            gx.iter_mut().zip(dx).for_each(|(d, s)| *d = *d + s);
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct PoolGeom {
    batched: bool,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    ho: usize,
    wo: usize,
}

impl PoolGeom {
    pub(crate) fn new(
        x: &[usize],
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Self> {
        let (batched, [n, c, h, w]) = split_map(x, "maxpool2d")?;
        if padding.0 * 2 > kernel.0 || padding.1 * 2 > kernel.1 {
            return Err(Error::shape(
                "maxpool2d",
                format!("padding {padding:?} exceeds half of kernel {kernel:?}"),
            ));
        }
        let fit = |len, k, s, p, axis| {
            window_out(len, k, s, p).map(|(o, _)| o).ok_or_else(|| {
                Error::shape("maxpool2d", format!("kernel {k} (stride {s}, padding {p}) larger than padded {axis} {len}"))
            })
        };
        let ho = fit(h, kernel.0, stride.0, padding.0, "height")?;
        let wo = fit(w, kernel.1, stride.1, padding.1, "width")?;
        Ok(PoolGeom {
            batched,
            n,
            c,
            h,
            w,
            kh: kernel.0,
            kw: kernel.1,
            sh: stride.0,
            sw: stride.1,
            ph: padding.0,
            pw: padding.1,
            ho,
            wo,
        })
    }
}

impl<T: Real> Graph<T> {
    /// Cross-correlation of `x` with `weight` (`[C_out, C_in, kh, kw]`).
    /// Errors when the output size would require flooring.
    pub fn conv2d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Option<Var>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Var> {
        let geom = self.conv_geom(x, weight, stride, padding)?;
        if let Some(b) = bias {
            if self.shape(b) != [geom.c_out] {
                return Err(Error::Dimension {
                    op: "conv2d bias",
                    lhs: vec![geom.c_out],
                    rhs: self.shape(b).to_vec(),
                });
            }
        }
        let (k, p, c_out) = (geom.k(), geom.positions(), geom.c_out);
        let in_size = geom.c_in * geom.h * geom.w;
        let keep_cols = self.requires_grad(weight);
        let xv = self.value(x).data();
        let wv = self.value(weight).data();
        let mut out = vec![T::zero(); geom.n * c_out * p];
        let per_sample = k * p;
        let mut cols = vec![T::zero(); if keep_cols { geom.n * per_sample } else { per_sample }];
        for n in 0..geom.n {
            let buf = if keep_cols {
                &mut cols[n * per_sample..(n + 1) * per_sample]
            } else {
                &mut cols[..]
            };
            geom.im2col(&xv[n * in_size..(n + 1) * in_size], buf);
            T::gemm(c_out, k, p, wv, false, buf, false, &mut out[n * c_out * p..(n + 1) * c_out * p], T::zero());
        }
        if let Some(b) = bias {
            let bv = self.value(b).data();
            for (i, chunk) in out.chunks_mut(p).enumerate() {
                let bias = bv[i % c_out];
                chunk.iter_mut().for_each(|v| *v = *v + bias);
            }
        }
        let cols = keep_cols.then_some(cols);
        let t = Tensor::new(geom.out_shape(), out)?;
        Ok(self.push(t, Op::Conv2d { x, w: weight, b: bias, geom, cols }))
    }

    /// Window maximum. Padded cells act as negative infinity; the gradient
    /// flows to the first maximal cell in row-major window order.
    pub fn maxpool2d(
        &mut self,
        x: Var,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Var> {
        let geom = self.pool_geom(x, kernel, stride, padding)?;
        let xv = self.value(x).data();
        let planes = geom.n * geom.c;
        let mut out = Vec::with_capacity(planes * geom.ho * geom.wo);
        let mut argmax = Vec::with_capacity(out.capacity());
        for plane in 0..planes {
            let base = plane * geom.h * geom.w;
            for oh in 0..geom.ho {
                for ow in 0..geom.wo {
                    let mut best = T::neg_infinity();
                    let mut best_at = usize::MAX;
                    for ki in 0..geom.kh {
                        let ih = (oh * geom.sh + ki) as isize - geom.ph as isize;
                        if ih < 0 || ih >= geom.h as isize {
                            continue;
                        }
                        for kj in 0..geom.kw {
                            let iw = (ow * geom.sw + kj) as isize - geom.pw as isize;
                            if iw < 0 || iw >= geom.w as isize {
                                continue;
                            }
                            let at = base + ih as usize * geom.w + iw as usize;
                            if best_at == usize::MAX || xv[at] > best {
                                best = xv[at];
                                best_at = at;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_at);
                }
            }
        }
        let shape = if geom.batched {
            vec![geom.n, geom.c, geom.ho, geom.wo]
        } else {
            vec![geom.c, geom.ho, geom.wo]
        };
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::MaxPool { x, argmax }))
    }

    /// Per-channel mean over all spatial positions: `[N,C,H,W] -> [N,C]`.
    pub fn adaptive_avg_pool(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (batched, [n, c, h, w]) = split_map(&shape, "adaptive_avg_pool")?;
        let hw = h * w;
        let denom = T::from_usize(hw).unwrap();
        let out: Vec<T> = self
            .value(x)
            .data()
            .chunks(hw)
            .map(|plane| plane.iter().copied().sum::<T>() / denom)
            .collect();
        let shape = if batched { vec![n, c] } else { vec![c] };
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::AvgPoolAll(x)))
    }
}

pub(crate) fn avgpool_backward<T: Real>(g: &Graph<T>, x: Var, up: &[T], grads: &mut [Option<Vec<T>>]) {
    let shape = g.shape(x);
    let hw = shape[shape.len() - 2] * shape[shape.len() - 1];
    let denom = T::from_usize(hw).unwrap();
    if let Some(gx) = g.grad_slot(x, grads) {
        for (plane, &s) in gx.chunks_mut(hw).zip(up) {
            plane.iter_mut().for_each(|d| *d = *d + s / denom);
        }
    }
}
