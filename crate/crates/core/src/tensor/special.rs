//! Batch normalization, bilinear grid sampling, and fused scalar losses.

use super::graph::{Op, Var};
use super::ops::BnStats;
use super::{Graph, Real, Tensor};
use crate::error::{Error, Result};

/// (batch, channels, spatial positions per channel) for `[N, C, ...]`.
fn bn_layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::shape("batch_norm", format!("expected [N, C, ...], got {shape:?}")));
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

impl<T: Real> Graph<T> {
    fn check_affine(&self, gamma: Var, beta: Var, channels: usize) -> Result<()> {
        for v in [gamma, beta] {
            if self.shape(v) != [channels] {
                return Err(Error::Dimension {
                    op: "batch_norm affine",
                    lhs: vec![channels],
                    rhs: self.shape(v).to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Normalizes with batch statistics. Returns the output together with
    /// the batch mean and unbiased variance for running-moment updates.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<(Var, BnStats<T>)> {
        let (n, c, hw) = bn_layout(self.shape(x))?;
        self.check_affine(gamma, beta, c)?;
        let m = n * hw;
        let mf = T::from_usize(m).unwrap();
        let xv = self.value(x).data();
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for b in 0..n {
            for ch in 0..c {
                let plane = &xv[(b * c + ch) * hw..(b * c + ch + 1) * hw];
                mean[ch] = mean[ch] + plane.iter().copied().sum::<T>();
            }
        }
        mean.iter_mut().for_each(|v| *v = *v / mf);
        for b in 0..n {
            for ch in 0..c {
                let plane = &xv[(b * c + ch) * hw..(b * c + ch + 1) * hw];
                var[ch] = var[ch] + plane.iter().map(|&v| (v - mean[ch]) * (v - mean[ch])).sum::<T>();
            }
        }
        var.iter_mut().for_each(|v| *v = *v / mf);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * hw;
                for i in base..base + hw {
                    xhat[i] = (xv[i] - mean[ch]) * inv_std[ch];
                    out[i] = gv[ch] * xhat[i] + bv[ch];
                }
            }
        }
        let unbiased = if m > 1 {
            let f = mf / T::from_usize(m - 1).unwrap();
            var.iter().map(|&v| v * f).collect()
        } else {
            var
        };
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        let y = self.push(
            t,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train: true,
            },
        );
        Ok((y, BnStats { mean, var: unbiased }))
    }

    /// Normalizes with recorded running moments.
    pub fn batch_norm_infer(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[T],
        running_var: &[T],
        eps: T,
    ) -> Result<Var> {
        let (n, c, hw) = bn_layout(self.shape(x))?;
        self.check_affine(gamma, beta, c)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::State(format!(
                "running moments have {} / {} entries for {c} channels",
                running_mean.len(),
                running_var.len()
            )));
        }
        let xv = self.value(x).data();
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let inv_std: Vec<T> = running_var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * hw;
                for i in base..base + hw {
                    xhat[i] = (xv[i] - running_mean[ch]) * inv_std[ch];
                    out[i] = gv[ch] * xhat[i] + bv[ch];
                }
            }
        }
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(
            t,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train: false,
            },
        ))
    }

    /// Samples `img` (`[N, C, H, W]`) at `grid` (`[N, Ho, Wo, 2]`, `(x, y)` in
    /// normalized coordinates where -1 and 1 are the centers of the border
    /// pixels). Neighbors outside the image contribute zero.
    pub fn bilinear_sample(&mut self, img: Var, grid: Var) -> Result<Var> {
        let (is, gs) = (self.shape(img).to_vec(), self.shape(grid).to_vec());
        let [n, c, h, w] = <[usize; 4]>::try_from(is.as_slice())
            .map_err(|_| Error::shape("bilinear_sample", format!("image must be [N,C,H,W], got {is:?}")))?;
        let [gn, ho, wo, two] = <[usize; 4]>::try_from(gs.as_slice())
            .map_err(|_| Error::shape("bilinear_sample", format!("grid must be [N,Ho,Wo,2], got {gs:?}")))?;
        if gn != n || two != 2 {
            return Err(Error::Dimension {
                op: "bilinear_sample",
                lhs: is,
                rhs: gs,
            });
        }
        let iv = self.value(img).data();
        let gv = self.value(grid).data();
        let mut out = vec![T::zero(); n * c * ho * wo];
        for b in 0..n {
            for p in 0..ho * wo {
                let taps = Taps::new(gv[(b * ho * wo + p) * 2], gv[(b * ho * wo + p) * 2 + 1], h, w);
                for ch in 0..c {
                    let plane = &iv[(b * c + ch) * h * w..(b * c + ch + 1) * h * w];
                    out[(b * c + ch) * ho * wo + p] = taps.sample(plane, w);
                }
            }
        }
        let t = Tensor::new(vec![n, c, ho, wo], out)?;
        Ok(self.push(t, Op::Bilinear { img, grid }))
    }

    /// Scalar node whose gradient with respect to `input` was computed
    /// together with its value.
    pub(crate) fn fused_scalar(&mut self, input: Var, value: T, grad: Vec<T>) -> Result<Var> {
        if grad.len() != self.value(input).numel() {
            return Err(Error::shape(
                "fused_scalar",
                format!("gradient has {} entries for input of shape {:?}", grad.len(), self.shape(input)),
            ));
        }
        Ok(self.push(Tensor::scalar(value), Op::Fused { input, grad }))
    }
}

/// Rounds coordinates within a few ulps of a pixel center onto it, so a
/// grid built from normalized pixel centers reads pixels back exactly.
fn snap<T: Real>(p: T) -> T {
    let r = p.round();
    let tol = T::epsilon() * T::lit(8.0) * p.abs().max(T::one());
    if (p - r).abs() <= tol {
        r
    } else {
        p
    }
}

/// Four-neighbor interpolation weights for one sampling location.
struct Taps<T> {
    x0: isize,
    y0: isize,
    fx: T,
    fy: T,
    h: usize,
    w: usize,
}

impl<T: Real> Taps<T> {
    fn new(gx: T, gy: T, h: usize, w: usize) -> Self {
        let two = T::lit(2.0);
        let px = (gx + T::one()) / two * T::from_usize(w.saturating_sub(1)).unwrap();
        let py = (gy + T::one()) / two * T::from_usize(h.saturating_sub(1)).unwrap();
        let (px, py) = (snap(px), snap(py));
        let (fx0, fy0) = (px.floor(), py.floor());
        Taps {
            x0: fx0.to_isize().unwrap_or(isize::MIN / 2),
            y0: fy0.to_isize().unwrap_or(isize::MIN / 2),
            fx: px - fx0,
            fy: py - fy0,
            h,
            w,
        }
    }

    fn pixel(&self, plane: &[T], y: isize, x: isize) -> T {
        if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
            T::zero()
        } else {
            plane[y as usize * self.w + x as usize]
        }
    }

    fn index(&self, y: isize, x: isize) -> Option<usize> {
        (y >= 0 && x >= 0 && y < self.h as isize && x < self.w as isize).then(|| y as usize * self.w + x as usize)
    }

    fn corners(&self) -> [(isize, isize, T); 4] {
        let (one, fx, fy) = (T::one(), self.fx, self.fy);
        [
            (self.y0, self.x0, (one - fy) * (one - fx)),
            (self.y0, self.x0 + 1, (one - fy) * fx),
            (self.y0 + 1, self.x0, fy * (one - fx)),
            (self.y0 + 1, self.x0 + 1, fy * fx),
        ]
    }

    fn sample(&self, plane: &[T], _w: usize) -> T {
        self.corners()
            .iter()
            .map(|&(y, x, wgt)| wgt * self.pixel(plane, y, x))
            .sum()
    }
}

pub(crate) fn bilinear_backward<T: Real>(
    g: &Graph<T>,
    img: Var,
    grid: Var,
    up: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    let [n, c, h, w] = <[usize; 4]>::try_from(g.shape(img)).unwrap();
    let (ho, wo) = (g.shape(grid)[1], g.shape(grid)[2]);
    let iv = g.value(img).data();
    let gv = g.value(grid).data();
    if let Some(gi) = g.grad_slot(img, grads) {
        for b in 0..n {
            for p in 0..ho * wo {
                let taps = Taps::new(gv[(b * ho * wo + p) * 2], gv[(b * ho * wo + p) * 2 + 1], h, w);
                for ch in 0..c {
                    let s = up[(b * c + ch) * ho * wo + p];
                    let base = (b * c + ch) * h * w;
                    for (y, x, wgt) in taps.corners() {
                        if let Some(i) = taps.index(y, x) {
                            gi[base + i] = gi[base + i] + s * wgt;
                        }
                    }
                }
            }
        }
    }
    if let Some(gg) = g.grad_slot(grid, grads) {
        let half = T::lit(0.5);
        let sx = half * T::from_usize(w.saturating_sub(1)).unwrap();
        let sy = half * T::from_usize(h.saturating_sub(1)).unwrap();
        for b in 0..n {
            for p in 0..ho * wo {
                let taps = Taps::new(gv[(b * ho * wo + p) * 2], gv[(b * ho * wo + p) * 2 + 1], h, w);
                let (one, fx, fy) = (T::one(), taps.fx, taps.fy);
                let (mut dx, mut dy) = (T::zero(), T::zero());
                for ch in 0..c {
                    let s = up[(b * c + ch) * ho * wo + p];
                    let plane = &iv[(b * c + ch) * h * w..(b * c + ch + 1) * h * w];
                    let v00 = taps.pixel(plane, taps.y0, taps.x0);
                    let v01 = taps.pixel(plane, taps.y0, taps.x0 + 1);
                    let v10 = taps.pixel(plane, taps.y0 + 1, taps.x0);
                    let v11 = taps.pixel(plane, taps.y0 + 1, taps.x0 + 1);
                    dx = dx + s * ((one - fy) * (v01 - v00) + fy * (v11 - v10));
                    dy = dy + s * ((one - fx) * (v10 - v00) + fx * (v11 - v01));
                }
                let at = (b * ho * wo + p) * 2;
                gg[at] = gg[at] + dx * sx;
                gg[at + 1] = gg[at + 1] + dy * sy;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn batchnorm_backward<T: Real>(
    g: &Graph<T>,
    x: Var,
    gamma: Var,
    beta: Var,
    xhat: &[T],
    inv_std: &[T],
    train: bool,
    up: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    let (n, c, hw) = bn_layout(g.shape(x)).expect("validated in forward");
    let gv = g.value(gamma).data();
    let mut sum_up = vec![T::zero(); c];
    let mut sum_up_xhat = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * hw;
            for i in base..base + hw {
                sum_up[ch] = sum_up[ch] + up[i];
                sum_up_xhat[ch] = sum_up_xhat[ch] + up[i] * xhat[i];
            }
        }
    }
    if let Some(gb) = g.grad_slot(beta, grads) {
        gb.iter_mut().zip(&sum_up).for_each(|(d, &s)| *d = *d + s);
    }
    if let Some(gg) = g.grad_slot(gamma, grads) {
        gg.iter_mut().zip(&sum_up_xhat).for_each(|(d, &s)| *d = *d + s);
    }
    if let Some(gx) = g.grad_slot(x, grads) {
        let m = T::from_usize(n * hw).unwrap();
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * hw;
                let scale = gv[ch] * inv_std[ch];
                for i in base..base + hw {
                    let d = if train {
                        scale * (up[i] - sum_up[ch] / m - xhat[i] * sum_up_xhat[ch] / m)
                    } else {
                        scale * up[i]
                    };
                    gx[i] = gx[i] + d;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standardized_batch_passes_through() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::new(vec![4, 1], vec![1.0, -1.0, 1.0, -1.0]).unwrap());
        let gamma = g.constant(Tensor::full(vec![1], 1.0));
        let beta = g.constant(Tensor::full(vec![1], 0.0));
        let (y, stats) = g.batch_norm_train(x, gamma, beta, 1e-5).unwrap();
        for (a, b) in g.value(y).data().iter().zip([1.0, -1.0, 1.0, -1.0]) {
            assert!((a - b / (1.0f64 + 1e-5).sqrt()).abs() < 1e-15);
        }
        assert_eq!(stats.mean, vec![0.0]);
        assert!((stats.var[0] - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_gamma_gives_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_fn(vec![3, 2, 2, 2], |_| rng.random_range(-3.0..3.0)));
        let gamma = g.constant(Tensor::zeros(vec![2]));
        let beta = g.constant(Tensor::new(vec![2], vec![0.25, -4.0]).unwrap());
        let (y, _) = g.batch_norm_train(x, gamma, beta, 1e-5).unwrap();
        for (i, v) in g.value(y).data().iter().enumerate() {
            let ch = (i / 4) % 2;
            assert_eq!(*v, [0.25, -4.0][ch]);
        }
    }

    #[test]
    fn matches_normalization_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<f64> = (0..24).map(|_| rng.random_range(-2.0..2.0)).collect();
        let gam = [0.5, 1.5];
        let bet = [0.1, -0.2];
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![3, 2, 4], data.clone()).unwrap());
        let gamma = g.constant(Tensor::new(vec![2], gam.to_vec()).unwrap());
        let beta = g.constant(Tensor::new(vec![2], bet.to_vec()).unwrap());
        let (y, _) = g.batch_norm_train(x, gamma, beta, 1e-5).unwrap();
        for ch in 0..2 {
            let vals: Vec<f64> = (0..3).flat_map(|b| (0..4).map(move |i| (b, i))).map(|(b, i)| data[(b * 2 + ch) * 4 + i]).collect();
            let mean = vals.iter().sum::<f64>() / 12.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 12.0;
            for b in 0..3 {
                for i in 0..4 {
                    let at = (b * 2 + ch) * 4 + i;
                    let expected = gam[ch] * (data[at] - mean) / (var + 1e-5).sqrt() + bet[ch];
                    assert!((g.value(y).data()[at] - expected).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn identity_grid_reproduces_image() {
        let (h, w) = (4usize, 6usize);
        let mut g = Graph::<f64>::new();
        let img_t = Tensor::from_fn(vec![1, 1, h, w], |i| (i as f64 * 0.37).sin());
        let img = g.constant(img_t.clone());
        let grid = Tensor::from_fn(vec![1, h, w, 2], |i| {
            let p = i / 2;
            let (y, x) = (p / w, p % w);
            if i % 2 == 0 {
                -1.0 + 2.0 * x as f64 / (w - 1) as f64
            } else {
                -1.0 + 2.0 * y as f64 / (h - 1) as f64
            }
        });
        let grid = g.constant(grid);
        let out = g.bilinear_sample(img, grid).unwrap();
        for (a, b) in g.value(out).data().iter().zip(img_t.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn far_outside_grid_samples_zero() {
        let mut g = Graph::<f64>::new();
        let img = g.constant(Tensor::full(vec![1, 2, 3, 3], 5.0));
        let grid = g.constant(Tensor::from_fn(vec![1, 2, 2, 2], |i| if i % 3 == 0 { 3.5 } else { -4.0 }));
        let out = g.bilinear_sample(img, grid).unwrap();
        assert!(g.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_pixel_shift_averages_ramp() {
        // Ramp image along x: value = column index.
        let w = 5usize;
        let mut g = Graph::<f64>::new();
        let img = g.constant(Tensor::from_fn(vec![1, 1, 1, w], |i| i as f64));
        // Sample halfway between columns 1 and 2: pixel x = 1.5.
        let gx = 1.5 / (w - 1) as f64 * 2.0 - 1.0;
        let grid = g.constant(Tensor::new(vec![1, 1, 1, 2], vec![gx, 0.0]).unwrap());
        let out = g.bilinear_sample(img, grid).unwrap();
        assert!((g.value(out).item() - 1.5).abs() < 1e-12);
    }
}
