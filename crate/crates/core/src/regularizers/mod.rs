//! Proper, convex, lower semicontinuous regularizers with their proximal maps,
//! subgradient selections, and (where cheap) convex conjugates.

mod basic;
mod nuclear;
mod separable;
mod sparse;
mod tv;

pub use basic::{NonNegative, SimplexIndicator, SquaredNorm, Zero};
pub use nuclear::{prox_nuclear, Nuclear};
pub use separable::{compose_separable, Separable};
pub use sparse::{prox_l1, prox_weighted_l1_dct, project_simplex, WeightedDctL1, L1};
pub use tv::{prox_tv, total_variation, TotalVariation};

use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Absolute slack used when testing membership in a constraint set.
pub const INDICATOR_BAND: f64 = 1e-9;

/// Band scaled to the magnitude of the bound it guards.
pub(crate) fn band(scale: f64) -> f64 {
    INDICATOR_BAND * scale.abs().max(1.0)
}

/// Caller-owned state threaded through repeated proximal evaluations. Only
/// regularizers with an iterative prox use it.
#[derive(Clone, Debug, Default)]
pub struct WarmStart {
    pub dual: Option<Tensor>,
    pub parts: Vec<WarmStart>,
    /// Relative gap reported by the last inexact prox, if any.
    pub last_gap: Option<f64>,
}

pub trait BregmanFunction: Send + Sync + Debug {
    /// `R(u)`, `+∞` outside the effective domain.
    fn value(&self, u: &Tensor) -> f64;

    /// `argmin_v ½‖v − z‖² + τ R(v)`, reusing iterative state in `warm`.
    fn prox_with(&self, z: &Tensor, tau: f64, warm: &mut WarmStart) -> Result<Tensor>;

    fn prox(&self, z: &Tensor, tau: f64) -> Result<Tensor> {
        self.prox_with(z, tau, &mut WarmStart::default())
    }

    /// A fixed element of `∂R(u)`.
    fn initial_subgradient(&self, u: &Tensor) -> Result<Tensor>;

    /// `R*(q)` when it has a closed form.
    fn conjugate_value(&self, _q: &Tensor) -> Option<f64> {
        None
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("prox step must be positive and finite, got {tau}")))
    }
}

pub(crate) fn check_len(u: &Tensor, n: usize, what: &str) -> Result<()> {
    if u.len() == n {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{what} expects {n} entries, got {}", u.len())))
    }
}

/// A point together with a claimed subgradient of some regularizer there.
#[derive(Clone, Debug)]
pub struct SubgradientPair {
    pub point: Tensor,
    pub subgradient: Tensor,
}

impl SubgradientPair {
    pub fn new(point: Tensor, subgradient: Tensor) -> Result<Self> {
        if point.len() != subgradient.len() {
            return Err(Error::Dimension(format!(
                "point has {} entries, subgradient {}",
                point.len(),
                subgradient.len()
            )));
        }
        Ok(Self { point, subgradient })
    }

    /// Fenchel-Young residual `R(u) + R*(q) − ⟨u, q⟩`, zero iff `q ∈ ∂R(u)`.
    pub fn residual(&self, r: &dyn BregmanFunction) -> Result<f64> {
        fenchel_residual(r, &self.point, &self.subgradient)
    }

    pub fn certify(&self, r: &dyn BregmanFunction, tol: f64) -> Result<bool> {
        Ok(self.residual(r)? <= tol)
    }
}

/// `D_R^q(u, v) = R(u) − R(v) − ⟨q, u − v⟩` for `q ∈ ∂R(v)`.
pub fn bregman_distance(r: &dyn BregmanFunction, u: &Tensor, v: &Tensor, q: &Tensor) -> f64 {
    let du: f64 = u.data().iter().zip(v.data()).zip(q.data()).map(|((a, b), c)| c * (a - b)).sum();
    r.value(u) - r.value(v) - du
}

/// `D_R^{p,q}(u, v) = ⟨p − q, u − v⟩` for `p ∈ ∂R(u)`, `q ∈ ∂R(v)`.
pub fn symmetric_bregman_distance(u: &Tensor, v: &Tensor, p: &Tensor, q: &Tensor) -> f64 {
    u.data()
        .iter()
        .zip(v.data())
        .zip(p.data().iter().zip(q.data()))
        .map(|((a, b), (c, d))| (c - d) * (a - b))
        .sum()
}

pub fn fenchel_residual(r: &dyn BregmanFunction, u: &Tensor, q: &Tensor) -> Result<f64> {
    let conj = r
        .conjugate_value(q)
        .ok_or_else(|| Error::Unsupported("regularizer has no closed-form conjugate".to_string()))?;
    Ok(r.value(u) + conj - u.dot(q))
}
