//! Smooth energies `E` driven by the solvers.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub trait SmoothObjective: Send + Sync {
    fn value(&self, u: &Tensor) -> Result<f64>;

    fn gradient(&self, u: &Tensor) -> Result<Tensor>;

    fn value_and_gradient(&self, u: &Tensor) -> Result<(f64, Tensor)> {
        Ok((self.value(u)?, self.gradient(u)?))
    }

    /// Global Lipschitz constant of `∇E`, when known.
    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

pub(crate) fn finite_or(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("{what} is not finite")))
    }
}

pub(crate) fn finite_grad(g: Tensor) -> Result<Tensor> {
    match g.data().iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Numerical(format!("gradient entry {i} is not finite"))),
        None => Ok(g),
    }
}
