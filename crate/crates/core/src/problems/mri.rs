//! Parallel MRI with unknown coil sensitivities,
//!
//! ```text
//! E(u, b₁..b_s) = ½ Σ_j ‖S ℱ(u · b_j) − f_j‖² + (ε/2)(‖u‖² + Σ_j ‖b_j‖²)
//! ```
//!
//! with complex unknowns stored as real pairs in the order
//! `[Re u, Im u, Re b₁, Im b₁, …]`, each block `N x N`.

use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::objective::SmoothObjective;
use crate::regularizers::{compose_separable, BregmanFunction, Separable, TotalVariation, WeightedDctL1};
use crate::tensor::{dft2, idft2, CTensor, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaskKind {
    Full,
    /// Archimedean spiral band through k-space plus a small fully sampled centre.
    Spiral,
    /// Independent Bernoulli samples with the given probability; DC always kept.
    Random(f64),
}

/// Pitch of the spiral mask in k-space samples per turn, relative to `N`.
const SPIRAL_PITCH_FRACTION: f64 = 1.0 / 8.0;
const SPIRAL_CENTRE_RADIUS: f64 = 2.0;

/// Signed frequency of DFT index `i` on an `n`-point grid.
fn centred(i: usize, n: usize) -> f64 {
    if i < n.div_ceil(2) {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// Binary `N x N` sampling pattern in unshifted DFT order (DC at `(0, 0)`).
pub fn sampling_mask(n: usize, kind: MaskKind, seed: u64) -> Result<Tensor> {
    if n == 0 {
        return Err(Error::Argument("mask size must be positive".into()));
    }
    match kind {
        MaskKind::Full => Ok(Tensor::full(&[n, n], 1.0)),
        MaskKind::Spiral => {
            let pitch = (SPIRAL_PITCH_FRACTION * n as f64).max(2.0);
            Ok(Tensor::from_fn2(n, n, |i, j| {
                let (ky, kx) = (centred(i, n), centred(j, n));
                let r = ky.hypot(kx);
                let theta = ky.atan2(kx).rem_euclid(2.0 * PI);
                let phase = (r - pitch * theta / (2.0 * PI)).rem_euclid(pitch);
                if r <= SPIRAL_CENTRE_RADIUS || phase < pitch / 4.0 {
                    1.0
                } else {
                    0.0
                }
            }))
        }
        MaskKind::Random(p) => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Argument(format!("sampling probability {p} outside [0, 1]")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = Tensor::from_fn2(n, n, |_, _| if rng.random_bool(p) { 1.0 } else { 0.0 });
            m.set2(0, 0, 1.0);
            Ok(m)
        }
    }
}

pub fn mask_fraction(mask: &Tensor) -> f64 {
    mask.sum() / mask.len() as f64
}

fn apply_mask(x: &CTensor, mask: &Tensor) -> CTensor {
    let mut out = x.clone();
    for (c, &m) in out.data_mut().iter_mut().zip(mask.data()) {
        if m == 0.0 {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    out
}

fn mul(a: &CTensor, b: &CTensor) -> CTensor {
    a.zip_map(b, |x, y| x * y)
}

fn conj_mul(a: &CTensor, b: &CTensor) -> CTensor {
    a.zip_map(b, |x, y| x.conj() * y)
}

/// Value and real-pair gradients `(∂u, [∂b_j])` of the MRI energy.
pub fn mri_energy_grad(
    u: &CTensor,
    b: &[CTensor],
    mask: &Tensor,
    data: &[CTensor],
    eps: f64,
) -> Result<(f64, CTensor, Vec<CTensor>)> {
    if b.len() != data.len() || b.is_empty() {
        return Err(Error::Dimension(format!("{} coil maps but {} data sets", b.len(), data.len())));
    }
    for t in b.iter().chain(data) {
        if t.shape() != u.shape() {
            return Err(Error::Dimension("coil maps and data must match the image shape".into()));
        }
    }
    if mask.shape() != u.shape() {
        return Err(Error::Dimension("mask must match the image shape".into()));
    }
    let mut value = 0.5 * eps * u.norm_sq();
    let mut gu = u.map(|c| c * eps);
    let mut gb = Vec::with_capacity(b.len());
    for (bj, fj) in b.iter().zip(data) {
        let k = apply_mask(&dft2(&mul(u, bj))?, mask);
        let r = k.zip_map(&apply_mask(fj, mask), |x, y| x - y);
        value += 0.5 * r.norm_sq() + 0.5 * eps * bj.norm_sq();
        let back = idft2(&r)?;
        gu = gu.zip_map(&conj_mul(bj, &back), |x, y| x + y);
        gb.push(conj_mul(u, &back).zip_map(bj, |x, y| x + eps * y));
    }
    Ok((value, gu, gb))
}

#[derive(Clone, Debug)]
pub struct ParallelMriProblem {
    n: usize,
    mask: Tensor,
    data: Vec<CTensor>,
    pub eps: f64,
}

impl ParallelMriProblem {
    pub fn new(mask: Tensor, data: Vec<CTensor>, eps: f64) -> Result<Self> {
        let (n, n2) = mask.dims2()?;
        if n != n2 || data.is_empty() || data.iter().any(|d| d.shape() != [n, n]) {
            return Err(Error::Dimension("need a square mask and per-coil data of the same shape".into()));
        }
        if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) || !(eps >= 0.0) {
            return Err(Error::Argument("mask must be binary and eps nonnegative".into()));
        }
        let data = data.iter().map(|d| apply_mask(d, &mask)).collect();
        Ok(Self { n, mask, data, eps })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn coils(&self) -> usize {
        self.data.len()
    }

    pub fn mask(&self) -> &Tensor {
        &self.mask
    }

    pub fn data(&self) -> &[CTensor] {
        &self.data
    }

    pub fn dim(&self) -> usize {
        2 * self.n * self.n * (1 + self.coils())
    }

    /// Range of real block `i` in the stacked layout (`0 = Re u`, `1 = Im u`,
    /// `2 + 2j = Re b_j`, `3 + 2j = Im b_j`).
    pub fn block(&self, i: usize) -> Range<usize> {
        let m = self.n * self.n;
        i * m..(i + 1) * m
    }

    pub fn stack(&self, u: &CTensor, b: &[CTensor]) -> Result<Tensor> {
        if b.len() != self.coils() || std::iter::once(u).chain(b).any(|t| t.shape() != [self.n, self.n]) {
            return Err(Error::Dimension("image or coil maps do not match the problem".into()));
        }
        let mut out = Vec::with_capacity(self.dim());
        for t in std::iter::once(u).chain(b) {
            out.extend(t.data().iter().map(|c| c.re));
            out.extend(t.data().iter().map(|c| c.im));
        }
        Tensor::new(&[self.dim()], out)
    }

    pub fn split(&self, x: &Tensor) -> Result<(CTensor, Vec<CTensor>)> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!("expected {} unknowns, got {}", self.dim(), x.len())));
        }
        let d = x.data();
        let shape = [self.n, self.n];
        let part = |i: usize| {
            let (re, im) = (&d[self.block(2 * i)], &d[self.block(2 * i + 1)]);
            CTensor::new(&shape, re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect())
        };
        let u = part(0)?;
        let b = (1..=self.coils()).map(part).collect::<Result<Vec<_>>>()?;
        Ok((u, b))
    }

    /// `(ε/2)(‖u‖² + Σ‖b_j‖²)`.
    pub fn eps_terms(&self, x: &Tensor) -> f64 {
        0.5 * self.eps * x.norm_sq()
    }

    /// TV on the real and imaginary parts of `u`, weighted DCT-ℓ1 on the real
    /// and imaginary parts of every coil map.
    pub fn regularizer(&self, alpha_tv: f64, beta_dct: f64, weights: &Tensor) -> Result<Separable> {
        let mut parts: Vec<(Box<dyn BregmanFunction>, Range<usize>)> = Vec::new();
        for i in 0..2 {
            parts.push((Box::new(TotalVariation::new(alpha_tv, self.n, self.n)?.lenient()), self.block(i)));
        }
        for i in 2..2 * (1 + self.coils()) {
            parts.push((Box::new(WeightedDctL1::new(beta_dct, weights.clone())?), self.block(i)));
        }
        compose_separable(parts)
    }
}

impl SmoothObjective for ParallelMriProblem {
    fn value(&self, x: &Tensor) -> Result<f64> {
        Ok(self.value_and_gradient(x)?.0)
    }

    fn gradient(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.value_and_gradient(x)?.1)
    }

    fn value_and_gradient(&self, x: &Tensor) -> Result<(f64, Tensor)> {
        let (u, b) = self.split(x)?;
        let (v, gu, gb) = mri_energy_grad(&u, &b, &self.mask, &self.data, self.eps)?;
        Ok((v, self.stack(&gu, &gb)?.into_shape(x.shape())?))
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticMri {
    pub problem: ParallelMriProblem,
    pub u_true: CTensor,
    pub b_true: Vec<CTensor>,
}

/// Disk phantom with a gentle phase ramp.
pub fn phantom(n: usize, seed: u64) -> CTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nf = n as f64;
    let mut mag = Tensor::zeros(&[n, n]);
    let head = 0.42 * nf;
    let disks: Vec<(f64, f64, f64, f64)> = (0..5)
        .map(|_| {
            (
                rng.random_range(0.3..0.7) * nf,
                rng.random_range(0.3..0.7) * nf,
                rng.random_range(0.05..0.15) * nf,
                rng.random_range(0.2..1.0),
            )
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            let (y, x) = (i as f64 + 0.5 - nf / 2.0, j as f64 + 0.5 - nf / 2.0);
            let mut v = if y.hypot(x) <= head { 0.5 } else { 0.0 };
            for &(ci, cj, r, val) in &disks {
                if (i as f64 - ci).hypot(j as f64 - cj) <= r {
                    v = val;
                }
            }
            mag.set2(i, j, v);
        }
    }
    let data = (0..n * n)
        .map(|k| {
            let j = (k % n) as f64;
            Complex64::from_polar(mag.data()[k], 0.3 * PI * j / nf)
        })
        .collect();
    CTensor::new(&[n, n], data).expect("phantom buffer has n*n entries")
}

/// Smooth Gaussian sensitivity centred on the rim with a linear phase ramp.
pub fn coil_map(n: usize, j: usize, coils: usize) -> CTensor {
    let nf = n as f64;
    let angle = 2.0 * PI * j as f64 / coils.max(1) as f64;
    let (cy, cx) = (nf / 2.0 + 0.4 * nf * angle.sin(), nf / 2.0 + 0.4 * nf * angle.cos());
    let width = 0.5 * nf;
    let data = (0..n * n)
        .map(|k| {
            let (i, jj) = ((k / n) as f64, (k % n) as f64);
            let d2 = (i - cy).powi(2) + (jj - cx).powi(2);
            let mag = (-d2 / (2.0 * width * width)).exp();
            let phase = PI * (angle.cos() * jj + angle.sin() * i) / nf;
            Complex64::from_polar(mag, phase)
        })
        .collect();
    CTensor::new(&[n, n], data).expect("coil buffer has n*n entries")
}

/// Noise-free data `f_j = S ℱ(ū · b̄_j)` for a seeded phantom.
pub fn make_synthetic_mri(seed: u64, n: usize, coils: usize, kind: MaskKind) -> Result<SyntheticMri> {
    if coils == 0 {
        return Err(Error::Argument("need at least one coil".into()));
    }
    let mask = sampling_mask(n, kind, seed)?;
    let u_true = phantom(n, seed);
    let b_true: Vec<CTensor> = (0..coils).map(|j| coil_map(n, j, coils)).collect();
    let data = b_true.iter().map(|b| Ok(apply_mask(&dft2(&mul(&u_true, b))?, &mask))).collect::<Result<Vec<_>>>()?;
    Ok(SyntheticMri { problem: ParallelMriProblem::new(mask, data, f64::EPSILON)?, u_true, b_true })
}
