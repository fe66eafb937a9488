//! Primal-dual hybrid gradient solver for the total-variation proximal problem
//!
//! ```text
//! min_u ½‖u − z‖² + λ TV(u),   TV(u) = Σ_i |(∇u)_i|
//! ```
//!
//! written as the saddle point `min_u max_{|p_i| ≤ λ} ½‖u − z‖² + ⟨∇u, p⟩`.
//! The returned primal is always `u = z + div p` for the best dual iterate,
//! so `z − u = −div p` is an explicit subgradient of `λ TV` at `u` whose
//! accuracy is measured by the reported gap.

use crate::error::{Error, Result};
use crate::tensor::{div2d, grad2d_forward, GradField, Tensor};

/// Squared operator norm bound of the forward-difference gradient.
pub const GRAD_NORM_SQ_BOUND: f64 = 8.0;

#[derive(Clone, Debug, PartialEq)]
pub struct PdhgConfig {
    pub sigma: f64,
    pub tau_inner: f64,
    pub theta: f64,
    /// Relative gap `(primal − dual) / (1 + |primal|)` at which to stop.
    pub tol: f64,
    pub maxit: usize,
    /// Gap evaluation interval (the first iteration is always checked).
    pub check_every: usize,
    /// Uses the strong convexity of the data term to adapt the steps
    /// (`θ_n = 1/√(1 + 2τ_n)`, `τ_{n+1} = θ_n τ_n`, `σ_{n+1} = σ_n / θ_n`).
    pub accelerate: bool,
}

impl Default for PdhgConfig {
    fn default() -> Self {
        let step = 1.0 / GRAD_NORM_SQ_BOUND.sqrt();
        Self { sigma: step, tau_inner: step, theta: 1.0, tol: 1e-7, maxit: 2000, check_every: 10, accelerate: false }
    }
}

impl PdhgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.tau_inner > 0.0) {
            return Err(Error::Argument("PDHG steps must be positive".into()));
        }
        if self.sigma * self.tau_inner * GRAD_NORM_SQ_BOUND > 1.0 + 1e-12 {
            return Err(Error::Argument(format!(
                "PDHG steps violate sigma*tau*8 <= 1 (sigma={}, tau={})",
                self.sigma, self.tau_inner
            )));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Argument(format!("theta {} outside [0, 1]", self.theta)));
        }
        if !(self.tol > 0.0) || self.maxit == 0 || self.check_every == 0 {
            return Err(Error::Argument("PDHG tol, maxit and check interval must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PdhgOutcome {
    pub u: Tensor,
    /// Dual field at the returned primal, with `|p_i| ≤ λ`.
    pub dual: GradField,
    pub gap: f64,
    pub iters: usize,
    /// Best gap recorded at every checkpoint, nonincreasing.
    pub gap_history: Vec<f64>,
}

/// Projects each two-vector of the field onto the disc of radius `radius`.
fn project_ball(p: &mut GradField, radius: f64) {
    let (px, py) = p.channels_mut();
    for (a, b) in px.iter_mut().zip(py.iter_mut()) {
        let n = a.hypot(*b);
        if n > radius {
            if radius == 0.0 {
                *a = 0.0;
                *b = 0.0;
            } else {
                let s = radius / n;
                *a *= s;
                *b *= s;
            }
        }
    }
}

/// Primal value and primal-dual gap of `u = z + div p`. The gap equals
/// `λ TV(u) − ⟨∇u, p⟩`, which is nonnegative whenever `|p_i| ≤ λ`.
fn evaluate(z: &Tensor, p: &GradField, lambda: f64) -> Result<(Tensor, f64, f64)> {
    let dp = div2d(p)?;
    let u = z.add(&dp);
    let gu = grad2d_forward(&u)?;
    let tv = gu.isotropic_l1();
    let primal = 0.5 * dp.norm_sq() + lambda * tv;
    let gap = (lambda * tv - gu.dot(p)).max(0.0);
    Ok((u, primal, gap))
}

/// Primal value of the iterate `u` and its gap `P(u) − D(p)` against the
/// dual bound `D(p) = ½‖z‖² − ½‖z + div p‖²`.
fn evaluate_primal(z: &Tensor, u: &Tensor, p: &GradField, lambda: f64) -> Result<(Tensor, f64, f64)> {
    let primal = 0.5 * u.sub(z).norm_sq() + lambda * grad2d_forward(u)?.isotropic_l1();
    let dual = 0.5 * z.norm_sq() - 0.5 * z.add(&div2d(p)?).norm_sq();
    Ok((u.clone(), primal, (primal - dual).max(0.0)))
}

/// Solves the TV proximal problem for a 2-D `z`. `warm` seeds the dual field.
pub fn pdhg_tv_prox(
    z: &Tensor,
    lambda: f64,
    cfg: &PdhgConfig,
    warm: Option<&GradField>,
) -> Result<PdhgOutcome> {
    cfg.validate()?;
    if !(lambda >= 0.0) {
        return Err(Error::Argument(format!("TV weight must be nonnegative, got {lambda}")));
    }
    let (rows, cols) = z.dims2()?;
    let mut p = match warm {
        Some(w) if w.rows() == rows && w.cols() == cols => w.clone(),
        _ => GradField::zeros(rows, cols),
    };
    project_ball(&mut p, lambda);

    let mut u = z.add(&div2d(&p)?);
    let mut u_bar = u.clone();
    let mut best: Option<(Tensor, GradField, f64)> = None;
    let mut history = Vec::new();
    let mut iters = 0;
    let (mut sigma, mut tau) = (cfg.sigma, cfg.tau_inner);

    for n in 1..=cfg.maxit {
        iters = n;
        let g = grad2d_forward(&u_bar)?;
        p.tensor_mut().axpy(sigma, g.tensor());
        project_ball(&mut p, lambda);

        let dp = div2d(&p)?;
        let u_old = std::mem::replace(&mut u, Tensor::zeros(&[rows, cols]));
        let denom = 1.0 + tau;
        u = Tensor::from_parts(
            &[rows, cols],
            u_old
                .data()
                .iter()
                .zip(dp.data())
                .zip(z.data())
                .map(|((uo, d), zv)| (uo + tau * (d + zv)) / denom)
                .collect(),
        );
        let theta = if cfg.accelerate {
            let t = 1.0 / (1.0 + 2.0 * tau).sqrt();
            tau *= t;
            sigma /= t;
            t
        } else {
            cfg.theta
        };
        u_bar = u.zip_map(&u_old, |a, b| a + theta * (a - b));

        if n == 1 || n % cfg.check_every == 0 || n == cfg.maxit {
            for (candidate, primal, gap) in [evaluate(z, &p, lambda)?, evaluate_primal(z, &u, &p, lambda)?] {
                let rel = gap / (1.0 + primal.abs());
                if best.as_ref().is_none_or(|b| rel < b.2) {
                    best = Some((candidate, p.clone(), rel));
                }
            }
            let best_rel = best.as_ref().map(|b| b.2).unwrap_or(f64::INFINITY);
            history.push(best_rel);
            if best_rel <= cfg.tol {
                break;
            }
        }
    }

    let (u_best, p_best, gap) = best.expect("at least one checkpoint is evaluated");
    if gap > cfg.tol {
        return Err(Error::InnerNotConverged { best: Box::new(u_best), gap, iters });
    }
    Ok(PdhgOutcome { u: u_best, dual: p_best, gap, iters, gap_history: history })
}
