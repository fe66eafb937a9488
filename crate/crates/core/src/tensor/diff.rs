//! Forward differences with replicate (Neumann) boundary and the matching divergence.

use super::Tensor;
use crate::error::{Error, Result};

/// Forward differences of an `H x W` image, stored as a `(2, H, W)` tensor.
/// Channel 0 differences along columns (x), channel 1 along rows (y).
#[derive(Clone, Debug, PartialEq)]
pub struct GradField {
    values: Tensor,
}

impl GradField {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { values: Tensor::zeros(&[2, rows, cols]) }
    }

    pub fn from_tensor(values: Tensor) -> Result<Self> {
        match values.shape() {
            [2, _, _] => Ok(Self { values }),
            s => Err(Error::Dimension(format!("gradient field must be (2, H, W), got {s:?}"))),
        }
    }

    pub fn rows(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn cols(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.values
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor {
        &mut self.values
    }

    pub fn into_tensor(self) -> Tensor {
        self.values
    }

    /// `(dx, dy)` channel slices.
    pub fn channels(&self) -> (&[f64], &[f64]) {
        self.values.data().split_at(self.rows() * self.cols())
    }

    pub fn channels_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        let n = self.rows() * self.cols();
        self.values.data_mut().split_at_mut(n)
    }

    /// Sum over pixels of the Euclidean length of the two-channel vector.
    pub fn isotropic_l1(&self) -> f64 {
        let (dx, dy) = self.channels();
        dx.iter().zip(dy).map(|(a, b)| a.hypot(*b)).sum()
    }

    pub fn dot(&self, other: &GradField) -> f64 {
        self.values.dot(&other.values)
    }
}

fn check_image(u: &Tensor) -> Result<(usize, usize)> {
    let (rows, cols) = u.dims2()?;
    if rows * cols < 2 {
        return Err(Error::Dimension(format!(
            "finite differences need at least two pixels, got {rows}x{cols}"
        )));
    }
    Ok((rows, cols))
}

pub fn grad2d_forward(u: &Tensor) -> Result<GradField> {
    let (rows, cols) = check_image(u)?;
    let mut g = GradField::zeros(rows, cols);
    let d = u.data();
    let (dx, dy) = g.channels_mut();
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            if j + 1 < cols {
                dx[k] = d[k + 1] - d[k];
            }
            if i + 1 < rows {
                dy[k] = d[k + cols] - d[k];
            }
        }
    }
    Ok(g)
}

/// Divergence, the negative adjoint of [`grad2d_forward`].
pub fn div2d(g: &GradField) -> Result<Tensor> {
    let (rows, cols) = (g.rows(), g.cols());
    if rows * cols < 2 {
        return Err(Error::Dimension(format!(
            "finite differences need at least two pixels, got {rows}x{cols}"
        )));
    }
    let (px, py) = g.channels();
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            let mut v = 0.0;
            if cols > 1 {
                if j + 1 < cols {
                    v += px[k];
                }
                if j > 0 {
                    v -= px[k - 1];
                }
            }
            if rows > 1 {
                if i + 1 < rows {
                    v += py[k];
                }
                if i > 0 {
                    v -= py[k - cols];
                }
            }
            out[k] = v;
        }
    }
    Ok(Tensor::from_parts(&[rows, cols], out))
}
