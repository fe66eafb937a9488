use super::{band, check_len, check_tau, BregmanFunction, WarmStart};
use crate::error::{Error, Result};
use crate::tensor::{dct2, idct2, Tensor};

#[inline]
fn shrink(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Entrywise soft shrinkage by `lambda ≥ 0`.
pub fn prox_l1(z: &Tensor, lambda: f64) -> Tensor {
    z.map(|v| shrink(v, lambda))
}

/// Soft shrinkage of the orthonormal DCT coefficients of `z` with thresholds
/// `lambda * w`, transformed back.
pub fn prox_weighted_l1_dct(z: &Tensor, lambda: f64, w: &Tensor) -> Result<Tensor> {
    z.ensure_same_shape(w, "weighted DCT shrinkage")?;
    if w.data().iter().any(|&v| v < 0.0) || lambda < 0.0 {
        return Err(Error::Argument("DCT shrinkage weights must be nonnegative".into()));
    }
    let c = dct2(z)?;
    let shrunk = c.zip_map(w, |v, wi| shrink(v, lambda * wi));
    idct2(&shrunk)
}

/// Euclidean projection onto `{x ≥ 0, Σ x = 1}` by sorting and thresholding.
pub fn project_simplex(z: &Tensor) -> Tensor {
    let mut sorted = z.data().to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (j, &m) in sorted.iter().enumerate() {
        acc += m;
        let t = (acc - 1.0) / (j + 1) as f64;
        if m - t > 0.0 {
            theta = t;
        }
    }
    z.map(|v| (v - theta).max(0.0))
}

/// `R(u) = α‖u‖₁`.
#[derive(Clone, Copy, Debug)]
pub struct L1 {
    pub weight: f64,
}

impl L1 {
    pub fn new(weight: f64) -> Result<Self> {
        if weight >= 0.0 && weight.is_finite() {
            Ok(Self { weight })
        } else {
            Err(Error::Argument(format!("weight must be nonnegative, got {weight}")))
        }
    }
}

impl BregmanFunction for L1 {
    fn value(&self, u: &Tensor) -> f64 {
        self.weight * u.data().iter().map(|v| v.abs()).sum::<f64>()
    }

    fn prox_with(&self, z: &Tensor, tau: f64, _warm: &mut WarmStart) -> Result<Tensor> {
        check_tau(tau)?;
        Ok(prox_l1(z, tau * self.weight))
    }

    fn initial_subgradient(&self, u: &Tensor) -> Result<Tensor> {
        Ok(u.map(|v| self.weight * sign(v)))
    }

    fn conjugate_value(&self, q: &Tensor) -> Option<f64> {
        Some(if q.max_abs() <= self.weight + band(self.weight) { 0.0 } else { f64::INFINITY })
    }
}

/// `R(u) = α Σ_l w_l |(C u)_l|` with `C` the orthonormal 2-D DCT-II.
#[derive(Clone, Debug)]
pub struct WeightedDctL1 {
    pub alpha: f64,
    weights: Tensor,
}

impl WeightedDctL1 {
    pub fn new(alpha: f64, weights: Tensor) -> Result<Self> {
        weights.dims2()?;
        if !(alpha >= 0.0 && alpha.is_finite()) || weights.data().iter().any(|&v| v < 0.0) {
            return Err(Error::Argument("DCT-l1 weights must be nonnegative".into()));
        }
        Ok(Self { alpha, weights })
    }

    /// Weight `low` on the four lowest frequencies `{0, 1}²` and `high` elsewhere.
    pub fn low_frequency_weights(rows: usize, cols: usize, low: f64, high: f64) -> Tensor {
        Tensor::from_fn2(rows, cols, |i, j| if i <= 1 && j <= 1 { low } else { high })
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    fn coefficients(&self, u: &Tensor) -> Result<Tensor> {
        check_len(u, self.weights.len(), "weighted DCT-l1")?;
        dct2(&u.reshape(self.weights.shape())?)
    }
}

impl BregmanFunction for WeightedDctL1 {
    fn value(&self, u: &Tensor) -> f64 {
        match self.coefficients(u) {
            Ok(c) => self.alpha * c.data().iter().zip(self.weights.data()).map(|(v, w)| w * v.abs()).sum::<f64>(),
            Err(_) => f64::NAN,
        }
    }

    fn prox_with(&self, z: &Tensor, tau: f64, _warm: &mut WarmStart) -> Result<Tensor> {
        check_tau(tau)?;
        check_len(z, self.weights.len(), "weighted DCT-l1")?;
        let out = prox_weighted_l1_dct(&z.reshape(self.weights.shape())?, tau * self.alpha, &self.weights)?;
        out.into_shape(z.shape())
    }

    fn initial_subgradient(&self, u: &Tensor) -> Result<Tensor> {
        let c = self.coefficients(u)?;
        let s = c.zip_map(&self.weights, |v, w| self.alpha * w * sign(v));
        idct2(&s)?.into_shape(u.shape())
    }

    fn conjugate_value(&self, q: &Tensor) -> Option<f64> {
        let c = self.coefficients(q).ok()?;
        let inside = c.data().iter().zip(self.weights.data()).all(|(v, w)| {
            let bound = self.alpha * w;
            v.abs() <= bound + band(bound)
        });
        Some(if inside { 0.0 } else { f64::INFINITY })
    }
}
