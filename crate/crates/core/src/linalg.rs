//! Dense LU factorization with partial pivoting (64-bit).

use crate::error::{Error, Result};

/// `P A = L U` for a square row-major matrix, stored compactly.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

/// Pivots at or below this magnitude (relative to the largest entry) are
/// treated as singular.
const PIVOT_TOL: f64 = 1e-12;

impl Lu {
    pub fn factor(n: usize, a: &[f64]) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::shape("lu", format!("expected {n}x{n} matrix, got {} values", a.len())));
        }
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::Degenerate("matrix is zero or non-finite".into()));
        }
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|r| (r, lu[r * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= PIVOT_TOL * scale {
                return Err(Error::Degenerate(format!("matrix is singular (pivot {pivot:e} at column {k})")));
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let d = lu[k * n + k];
            for r in k + 1..n {
                let f = lu[r * n + k] / d;
                lu[r * n + k] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        lu[r * n + c] -= f * lu[k * n + c];
                    }
                }
            }
        }
        Ok(Lu { n, lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` for one right-hand side.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let s: f64 = (0..r).map(|c| self.lu[r * n + c] * x[c]).sum();
            x[r] -= s;
        }
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| self.lu[r * n + c] * x[c]).sum();
            x[r] = (x[r] - s) / self.lu[r * n + r];
        }
        x
    }

    /// Explicit inverse, row-major.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            for (r, v) in self.solve(&e).into_iter().enumerate() {
                inv[r * n + c] = v;
            }
        }
        inv
    }
}
