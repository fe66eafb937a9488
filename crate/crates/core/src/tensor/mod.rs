//! Dense row-major arrays and the discrete linear operators built on them.
//!
//! A [`Tensor`] is the single vector-space element used throughout the crate:
//! images, convolution kernels, weight matrices and the stacked variables the
//! solver iterates on are all flat `f64` buffers with an explicit shape.

mod conv;
mod diff;
mod linalg;
mod transform;

pub use conv::{conv2d_periodic, conv2d_periodic_adjoint, kernel_anchor, kernel_gradient};
pub use diff::{div2d, grad2d_forward, GradField};
pub use linalg::{matmul, svd_thin, Svd, Transpose};
pub use transform::{dct2, dft2, idct2, idft2, CTensor};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    data: Vec<f64>,
    shape: Vec<usize>,
}

impl Tensor {
    /// Builds a tensor from user data. Rejects shape/length mismatches and
    /// non-finite entries.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_shape(shape, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("non-finite entry at flat index {i}")));
        }
        Ok(Self { data, shape: shape.to_vec() })
    }

    /// Builds a tensor from data produced internally. Only the length is checked.
    pub(crate) fn from_parts(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match buffer length {}",
            data.len()
        );
        Self { data, shape: shape.to_vec() }
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(&[n], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::from_parts(shape, vec![value; shape.iter().product()])
    }

    pub fn from_fn2(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_parts(&[rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `(rows, cols)` of a 2-D tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Dimension(format!("expected a 2-D tensor, got shape {:?}", self.shape))),
        }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        check_shape(shape, self.data.len())?;
        Ok(Self { data: self.data.clone(), shape: shape.to_vec() })
    }

    pub fn into_shape(self, shape: &[usize]) -> Result<Tensor> {
        check_shape(shape, self.data.len())?;
        Ok(Self { data: self.data, shape: shape.to_vec() })
    }

    pub fn flatten(&self) -> Tensor {
        Self { data: self.data.clone(), shape: vec![self.data.len()] }
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn set2(&mut self, i: usize, j: usize, v: f64) {
        let w = self.shape[1];
        self.data[i * w + j] = v;
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Self { data: self.data.iter().map(|&v| f(v)).collect(), shape: self.shape.clone() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        debug_assert_eq!(self.len(), other.len());
        Self {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            shape: self.shape.clone(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| s * v)
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Tensor) {
        debug_assert_eq!(self.len(), x.len());
        for (y, v) in self.data.iter_mut().zip(&x.data) {
            *y += a * v;
        }
    }

    /// Copies out the flat range as a 1-D tensor.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Tensor {
        let n = range.len();
        Self::from_parts(&[n], self.data[range].to_vec())
    }

    /// Concatenates the flattened parts into one 1-D tensor.
    pub fn concat(parts: &[&Tensor]) -> Tensor {
        let data: Vec<f64> = parts.iter().flat_map(|p| p.data.iter().copied()).collect();
        let n = data.len();
        Self::from_parts(&[n], data)
    }

    /// Checks that both tensors have identical shapes.
    pub fn ensure_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}

fn check_shape(shape: &[usize], len: usize) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::Dimension(format!("shape {shape:?} must have positive extents")));
    }
    let n: usize = shape.iter().product();
    if n != len {
        return Err(Error::Dimension(format!("shape {shape:?} holds {n} entries, buffer has {len}")));
    }
    Ok(())
}
