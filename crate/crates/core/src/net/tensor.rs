use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

use crate::error::{Error, Result};

/// Floating-point element type of the network (`f32` for training runs,
/// `f64` for gradient checks).
pub trait Real:
    Float + AddAssign + SubAssign + MulAssign + Sum + Default + Debug + Send + Sync + 'static
{
    fn of(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `C = alpha A B + beta C` on strided row/column layouts, with
    /// `A: m x k`, `B: k x n`, `C: m x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: (&[Self], isize, isize), b: (&[Self], isize, isize), beta: Self, c: (&mut [Self], isize, isize));
}

fn check_extent(len: usize, rows: usize, cols: usize, rs: isize, cs: isize) {
    if rows > 0 && cols > 0 {
        let last = (rows as isize - 1) * rs + (cols as isize - 1) * cs;
        assert!(rs >= 0 && cs >= 0 && (last as usize) < len, "matrix view out of bounds");
    }
}

macro_rules! impl_gemm {
    ($t:ty, $f:path) => {
        fn gemm(m: usize, k: usize, n: usize, alpha: $t, a: (&[$t], isize, isize), b: (&[$t], isize, isize), beta: $t, c: (&mut [$t], isize, isize)) {
            check_extent(a.0.len(), m, k, a.1, a.2);
            check_extent(b.0.len(), k, n, b.1, b.2);
            check_extent(c.0.len(), m, n, c.1, c.2);
            // SAFETY: every view was bounds-checked above and `c` is borrowed mutably.
            unsafe { $f(m, k, n, alpha, a.0.as_ptr(), a.1, a.2, b.0.as_ptr(), b.1, b.2, beta, c.0.as_mut_ptr(), c.1, c.2) }
        }
    };
}

impl Real for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    impl_gemm!(f32, matrixmultiply::sgemm);
}

impl Real for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    impl_gemm!(f64, matrixmultiply::dgemm);
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::State("tensor contains non-finite values".into()));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn scalar(v: T) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![v],
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Mean absolute error over all elements.
pub fn loss_mae<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::shape("empty tensors"));
    }
    let sum: T = pred.data().iter().zip(target.data()).map(|(&p, &t)| (p - t).abs()).sum();
    Ok(sum / T::of(pred.len() as f64))
}
