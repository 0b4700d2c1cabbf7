//! Dense tensors with a tape-based reverse-mode differentiator.
//!
//! A [`Graph`] owns every intermediate value produced during a forward pass.
//! Values are addressed through [`Var`] handles; nodes are appended in
//! creation order, which is also a valid topological order, so
//! [`Graph::backward`] simply walks the tape in reverse.

mod conv;
mod gradcheck;
mod graph;
mod ops;
mod params;
mod special;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

use crate::error::{Error, Result};

pub use gradcheck::{grad_check, grad_check_params, GradCheckReport};
pub use graph::{Graph, Var};
pub use ops::BnStats;
pub use params::{read_checkpoint_header, BnUpdate, Checkpoint, Init, ParamId, ParamStore, Session, TensorHeader};

/// Floating point element type. Implemented for `f32` (training) and `f64`
/// (oracles and gradient checks).
pub trait Real:
    Float + FromPrimitive + Default + Debug + Display + Send + Sync + Sum + 'static
{
    /// `c = op(a) * op(b) + beta * c`, all row-major. `op(a)` is `m x k`,
    /// `op(b)` is `k x n`. A transposed operand is stored in its untransposed
    /// layout (`k x m` for `a`).
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        trans_a: bool,
        b: &[Self],
        trans_b: bool,
        c: &mut [Self],
        beta: Self,
    );

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal fits the float type")
    }

    fn to_f32_lossy(self) -> f32;

    fn from_f32_exact(x: f32) -> Self;
}

fn gemm_strides(m: usize, k: usize, n: usize, trans_a: bool, trans_b: bool) -> [isize; 4] {
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    [rsa, csa, rsb, csb]
}

impl Real for f32 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f32],
        trans_a: bool,
        b: &[f32],
        trans_b: bool,
        c: &mut [f32],
        beta: f32,
    ) {
        assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
        if m == 0 || n == 0 {
            return;
        }
        let [rsa, csa, rsb, csb] = gemm_strides(m, k, n, trans_a, trans_b);
        // SAFETY: bounds asserted above; strides describe dense row-major buffers.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }

    fn to_f32_lossy(self) -> f32 {
        self
    }

    fn from_f32_exact(x: f32) -> Self {
        x
    }
}

impl Real for f64 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f64],
        trans_a: bool,
        b: &[f64],
        trans_b: bool,
        c: &mut [f64],
        beta: f64,
    ) {
        assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
        if m == 0 || n == 0 {
            return;
        }
        let [rsa, csa, rsb, csb] = gemm_strides(m, k, n, trans_a, trans_b);
        // SAFETY: bounds asserted above; strides describe dense row-major buffers.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }

    fn to_f32_lossy(self) -> f32 {
        self as f32
    }

    fn from_f32_exact(x: f32) -> Self {
        x as f64
    }
}

/// Dense row-major n-dimensional array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "tensor construction",
                format!("shape {shape:?} needs {numel} values, got {}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> T) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: (0..numel).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn reshaped(mut self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Dimension {
                op: "reshape",
                lhs: self.shape,
                rhs: shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise precision conversion.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or(U::nan()))
                .collect(),
        }
    }
}

pub(crate) fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}
