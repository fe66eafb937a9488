//! Blind deconvolution `E(u, h) = ½‖u ∗ h − f‖²` over the stacked variable
//! `[u (H·W entries), h (kh·kw entries)]`.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::objective::SmoothObjective;
use crate::tensor::{conv2d_periodic, conv2d_periodic_adjoint, kernel_gradient, Tensor};

/// Gradients of `½‖u ∗ h − f‖²` with respect to `u` and `h`.
pub fn blind_deconv_grad(u: &Tensor, h: &Tensor, f: &Tensor) -> Result<(Tensor, Tensor)> {
    u.ensure_same_shape(f, "blind deconvolution data")?;
    let r = conv2d_periodic(u, h)?.sub(f);
    let (kh, kw) = h.dims2()?;
    Ok((conv2d_periodic_adjoint(&r, h)?, kernel_gradient(u, &r, (kh, kw))?))
}

#[derive(Clone, Debug)]
pub struct BlindDeconvProblem {
    f: Tensor,
    kernel_shape: (usize, usize),
}

impl BlindDeconvProblem {
    pub fn new(f: Tensor, kernel_shape: (usize, usize)) -> Result<Self> {
        let (h, w) = f.dims2()?;
        let (kh, kw) = kernel_shape;
        if kh == 0 || kw == 0 || kh > h || kw > w {
            return Err(Error::Dimension(format!("kernel {kh}x{kw} does not fit image {h}x{w}")));
        }
        Ok(Self { f, kernel_shape })
    }

    pub fn data(&self) -> &Tensor {
        &self.f
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.f.shape()[0], self.f.shape()[1])
    }

    pub fn kernel_shape(&self) -> (usize, usize) {
        self.kernel_shape
    }

    pub fn image_range(&self) -> Range<usize> {
        0..self.f.len()
    }

    pub fn kernel_range(&self) -> Range<usize> {
        let n = self.f.len();
        n..n + self.kernel_shape.0 * self.kernel_shape.1
    }

    pub fn dim(&self) -> usize {
        self.kernel_range().end
    }

    pub fn stack(&self, u: &Tensor, h: &Tensor) -> Result<Tensor> {
        if u.len() != self.f.len() || h.len() != self.kernel_range().len() {
            return Err(Error::Dimension("image or kernel size does not match the problem".into()));
        }
        Ok(Tensor::concat(&[u, h]))
    }

    pub fn split(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!("expected {} unknowns, got {}", self.dim(), x.len())));
        }
        let flat = x.flatten();
        let u = flat.slice(self.image_range()).into_shape(self.f.shape())?;
        let h = flat.slice(self.kernel_range()).into_shape(&[self.kernel_shape.0, self.kernel_shape.1])?;
        Ok((u, h))
    }

    pub fn residual(&self, x: &Tensor) -> Result<Tensor> {
        let (u, h) = self.split(x)?;
        Ok(conv2d_periodic(&u, &h)?.sub(&self.f))
    }
}

impl SmoothObjective for BlindDeconvProblem {
    fn value(&self, x: &Tensor) -> Result<f64> {
        Ok(0.5 * self.residual(x)?.norm_sq())
    }

    fn gradient(&self, x: &Tensor) -> Result<Tensor> {
        let (u, h) = self.split(x)?;
        let (gu, gh) = blind_deconv_grad(&u, &h, &self.f)?;
        Tensor::concat(&[&gu, &gh]).into_shape(x.shape())
    }
}

/// Stopping level `1.2σ² / (2√(H·W))`.
pub fn discrepancy_eta(sigma: f64, rows: usize, cols: usize) -> f64 {
    1.2 * sigma * sigma / (2.0 * ((rows * cols) as f64).sqrt())
}

/// Normalised linear motion kernel: a rasterised segment from the top-left to
/// the bottom-right corner, each sample weighted by its distance to the line.
pub fn motion_kernel(kh: usize, kw: usize) -> Result<Tensor> {
    if kh == 0 || kw == 0 {
        return Err(Error::Argument("kernel extents must be positive".into()));
    }
    let (y1, x1) = ((kh - 1) as f64, (kw - 1) as f64);
    let len = y1.hypot(x1);
    let k = Tensor::from_fn2(kh, kw, |i, j| {
        let d = if len == 0.0 { 0.0 } else { (x1 * i as f64 - y1 * j as f64).abs() / len };
        (1.0 - d).max(0.0)
    });
    let s = k.sum();
    Ok(k.scale(1.0 / s))
}

/// Piecewise-constant test image in `[0, 1]`: a background with seeded
/// rectangles and disks.
pub fn piecewise_constant_image(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Tensor::full(&[rows, cols], 0.2);
    let (r, c) = (rows as f64, cols as f64);
    for shape in 0..6 {
        let value = rng.random_range(0.0..1.0);
        let ci = rng.random_range(0.15 * r..0.85 * r);
        let cj = rng.random_range(0.15 * c..0.85 * c);
        let a = rng.random_range(0.1..0.3) * r;
        let b = rng.random_range(0.1..0.3) * c;
        for i in 0..rows {
            for j in 0..cols {
                let (di, dj) = (i as f64 - ci, j as f64 - cj);
                let inside = if shape % 2 == 0 {
                    di.abs() <= a && dj.abs() <= b
                } else {
                    (di / a).powi(2) + (dj / b).powi(2) <= 1.0
                };
                if inside {
                    img.set2(i, j, value);
                }
            }
        }
    }
    img
}

#[derive(Clone, Debug)]
pub struct SyntheticDeconv {
    pub problem: BlindDeconvProblem,
    pub u_true: Tensor,
    pub h_true: Tensor,
    pub sigma: f64,
}

/// `f = ū ∗ h̄ + n` with `n ~ N(0, σ²)` i.i.d.; deterministic per seed.
/// `ū` is the piecewise-constant image scaled by `contrast`.
pub fn make_synthetic_deconv(
    seed: u64,
    rows: usize,
    cols: usize,
    kernel: &Tensor,
    sigma: f64,
    contrast: f64,
) -> Result<SyntheticDeconv> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Argument(format!("noise level must be nonnegative, got {sigma}")));
    }
    if !(contrast > 0.0 && contrast.is_finite()) {
        return Err(Error::Argument(format!("contrast must be positive, got {contrast}")));
    }
    let u_true = piecewise_constant_image(rows, cols, seed).scale(contrast);
    let clean = conv2d_periodic(&u_true, kernel)?;
    let f = if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Argument(e.to_string()))?;
        let noisy = clean.data().iter().map(|v| v + normal.sample(&mut rng)).collect();
        Tensor::new(clean.shape(), noisy)?
    } else {
        clean
    };
    let (kh, kw) = kernel.dims2()?;
    Ok(SyntheticDeconv { problem: BlindDeconvProblem::new(f, (kh, kw))?, u_true, h_true: kernel.clone(), sigma })
}
