use super::{band, check_tau, project_simplex, BregmanFunction, WarmStart};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `R = 0`. Linearised Bregman iterations reduce to gradient descent.
#[derive(Clone, Copy, Debug, Default)]
pub struct Zero;

impl BregmanFunction for Zero {
    fn value(&self, _u: &Tensor) -> f64 {
        0.0
    }

    fn prox_with(&self, z: &Tensor, tau: f64, _warm: &mut WarmStart) -> Result<Tensor> {
        check_tau(tau)?;
        Ok(z.clone())
    }

    fn initial_subgradient(&self, u: &Tensor) -> Result<Tensor> {
        Ok(Tensor::zeros(u.shape()))
    }

    fn conjugate_value(&self, q: &Tensor) -> Option<f64> {
        Some(if q.max_abs() <= band(1.0) { 0.0 } else { f64::INFINITY })
    }
}

/// `R(u) = (w/2)‖u‖²`.
#[derive(Clone, Copy, Debug)]
pub struct SquaredNorm {
    pub weight: f64,
}

impl SquaredNorm {
    pub fn new(weight: f64) -> Result<Self> {
        if weight >= 0.0 && weight.is_finite() {
            Ok(Self { weight })
        } else {
            Err(Error::Argument(format!("weight must be nonnegative, got {weight}")))
        }
    }
}

impl BregmanFunction for SquaredNorm {
    fn value(&self, u: &Tensor) -> f64 {
        0.5 * self.weight * u.norm_sq()
    }

    fn prox_with(&self, z: &Tensor, tau: f64, _warm: &mut WarmStart) -> Result<Tensor> {
        check_tau(tau)?;
        Ok(z.scale(1.0 / (1.0 + tau * self.weight)))
    }

    fn initial_subgradient(&self, u: &Tensor) -> Result<Tensor> {
        Ok(u.scale(self.weight))
    }

    fn conjugate_value(&self, q: &Tensor) -> Option<f64> {
        if self.weight > 0.0 {
            Some(q.norm_sq() / (2.0 * self.weight))
        } else {
            Zero.conjugate_value(q)
        }
    }
}

/// Indicator of the nonnegative orthant.
#[derive(Clone, Copy, Debug, Default)]
pub struct NonNegative;

impl BregmanFunction for NonNegative {
    fn value(&self, u: &Tensor) -> f64 {
        if u.data().iter().all(|&v| v >= -band(1.0)) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox_with(&self, z: &Tensor, tau: f64, _warm: &mut WarmStart) -> Result<Tensor> {
        check_tau(tau)?;
        Ok(z.map(|v| v.max(0.0)))
    }

    fn initial_subgradient(&self, u: &Tensor) -> Result<Tensor> {
        if self.value(u).is_finite() {
            Ok(Tensor::zeros(u.shape()))
        } else {
            Err(Error::Domain("point has negative entries".into()))
        }
    }

    fn conjugate_value(&self, q: &Tensor) -> Option<f64> {
        Some(if q.data().iter().all(|&v| v <= band(1.0)) { 0.0 } else { f64::INFINITY })
    }
}

/// Indicator of the probability simplex `{u ≥ 0, Σ u = 1}`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SimplexIndicator;

impl SimplexIndicator {
    pub fn contains(u: &Tensor) -> bool {
        let n = u.len() as f64;
        u.data().iter().all(|&v| v >= -band(1.0)) && (u.sum() - 1.0).abs() <= band(n)
    }
}

impl BregmanFunction for SimplexIndicator {
    fn value(&self, u: &Tensor) -> f64 {
        if Self::contains(u) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox_with(&self, z: &Tensor, tau: f64, _warm: &mut WarmStart) -> Result<Tensor> {
        check_tau(tau)?;
        Ok(project_simplex(z))
    }

    fn initial_subgradient(&self, u: &Tensor) -> Result<Tensor> {
        if Self::contains(u) {
            Ok(Tensor::zeros(u.shape()))
        } else {
            Err(Error::Domain("point is not in the probability simplex".into()))
        }
    }

    fn conjugate_value(&self, q: &Tensor) -> Option<f64> {
        q.data().iter().copied().reduce(f64::max)
    }
}
