//! Orthonormal 2-D DFT and DCT-II. Both transforms are unitary, so each
//! inverse is also the adjoint.

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::Tensor;
use crate::error::{Error, Result};

/// Complex counterpart of [`Tensor`].
#[derive(Clone, Debug, PartialEq)]
pub struct CTensor {
    data: Vec<Complex64>,
    shape: Vec<usize>,
}

impl CTensor {
    pub fn new(shape: &[usize], data: Vec<Complex64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || n != data.len() || n == 0 {
            return Err(Error::Dimension(format!(
                "shape {shape:?} does not match buffer length {}",
                data.len()
            )));
        }
        Ok(Self { data, shape: shape.to_vec() })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self { data: vec![Complex64::new(0.0, 0.0); shape.iter().product()], shape: shape.to_vec() }
    }

    pub fn from_real(t: &Tensor) -> Self {
        Self {
            data: t.data().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            shape: t.shape().to_vec(),
        }
    }

    pub fn from_re_im(re: &Tensor, im: &Tensor) -> Result<Self> {
        re.ensure_same_shape(im, "complex from parts")?;
        Ok(Self {
            data: re.data().iter().zip(im.data()).map(|(&a, &b)| Complex64::new(a, b)).collect(),
            shape: re.shape().to_vec(),
        })
    }

    pub fn re(&self) -> Tensor {
        Tensor::from_parts(&self.shape, self.data.iter().map(|c| c.re).collect())
    }

    pub fn im(&self) -> Tensor {
        Tensor::from_parts(&self.shape, self.data.iter().map(|c| c.im).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Dimension(format!("expected a 2-D tensor, got shape {:?}", self.shape))),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> CTensor {
        Self { data: self.data.iter().map(|&c| f(c)).collect(), shape: self.shape.clone() }
    }

    pub fn zip_map(&self, other: &CTensor, f: impl Fn(Complex64, Complex64) -> Complex64) -> CTensor {
        debug_assert_eq!(self.shape, other.shape);
        Self {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            shape: self.shape.clone(),
        }
    }
}

fn fft2(x: &CTensor, direction: FftDirection) -> Result<CTensor> {
    let (rows, cols) = x.dims2()?;
    let mut planner = FftPlanner::<f64>::new();
    let mut out = x.clone();
    let row_fft = planner.plan_fft(cols, direction);
    row_fft.process(&mut out.data);
    let col_fft = planner.plan_fft(rows, direction);
    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    for j in 0..cols {
        for i in 0..rows {
            column[i] = out.data[i * cols + j];
        }
        col_fft.process(&mut column);
        for i in 0..rows {
            out.data[i * cols + j] = column[i];
        }
    }
    let scale = 1.0 / ((rows * cols) as f64).sqrt();
    for c in &mut out.data {
        *c *= scale;
    }
    Ok(out)
}

/// Orthonormal 2-D discrete Fourier transform.
pub fn dft2(x: &CTensor) -> Result<CTensor> {
    fft2(x, FftDirection::Forward)
}

pub fn idft2(x: &CTensor) -> Result<CTensor> {
    fft2(x, FftDirection::Inverse)
}

/// Row-major `n x n` orthonormal DCT-II matrix.
fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    let nf = n as f64;
    for k in 0..n {
        let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for i in 0..n {
            m[k * n + i] = s * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos();
        }
    }
    m
}

/// Applies `rows_mat` on the left and `cols_matᵀ` on the right, transposing each
/// matrix first when `inverse` is set.
fn separable(u: &Tensor, inverse: bool) -> Result<Tensor> {
    let (rows, cols) = u.dims2()?;
    let mr = dct_matrix(rows);
    let mc = dct_matrix(cols);
    let d = u.data();
    let at = |m: &[f64], n: usize, a: usize, b: usize| if inverse { m[b * n + a] } else { m[a * n + b] };
    // along each row (column index transform)
    let mut tmp = vec![0.0; rows * cols];
    for i in 0..rows {
        let row = &d[i * cols..(i + 1) * cols];
        for k in 0..cols {
            tmp[i * cols + k] = row.iter().enumerate().map(|(j, v)| at(&mc, cols, k, j) * v).sum();
        }
    }
    let mut out = vec![0.0; rows * cols];
    for k in 0..rows {
        for i in 0..rows {
            let w = at(&mr, rows, k, i);
            if w == 0.0 {
                continue;
            }
            for j in 0..cols {
                out[k * cols + j] += w * tmp[i * cols + j];
            }
        }
    }
    Ok(Tensor::from_parts(&[rows, cols], out))
}

/// Orthonormal 2-D DCT-II. Coefficient `(0, 0)` is the DC term; row index is
/// the vertical frequency and column index the horizontal frequency.
pub fn dct2(u: &Tensor) -> Result<Tensor> {
    separable(u, false)
}

pub fn idct2(c: &Tensor) -> Result<Tensor> {
    separable(c, true)
}
