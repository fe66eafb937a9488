//! Linearised Bregman iteration with backtracking, the projected/proximal
//! gradient baselines, stopping rules, and convergence monitors.
//!
//! One step from `(u, q)` with stepsize `τ` reads
//!
//! ```text
//! u⁺ = prox_{τR}(u + τ(q − ∇E(u)))
//! q⁺ = q − (u⁺ − u + τ∇E(u)) / τ
//! ```
//!
//! and `q⁺ ∈ ∂R(u⁺)` by optimality of the prox.

mod monitor;

pub use monitor::{write_monitor_csv, MonitorRecord, CSV_HEADER, CSV_VERSION};

use crate::error::{Error, Result};
use crate::objective::{finite_grad, finite_or, SmoothObjective};
use crate::regularizers::{bregman_distance, BregmanFunction, WarmStart};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Linearised Bregman iteration; the dual variable carries memory.
    Linbreg,
    /// `u⁺ = proj_C(u − τ∇E(u))` with `R` the indicator of `C`.
    ProjectedGradient,
    /// `u⁺ = prox_{τR}(u − τ∇E(u))`.
    ProximalGradient,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Linbreg => "linbreg",
            Method::ProjectedGradient => "projected-gd",
            Method::ProximalGradient => "proximal-gd",
        }
    }
}

/// The pair `s^k = (u^k, q^{k−1})` together with `q^k`, the cached gradient
/// and the stepsize used to reach `u^k`.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub u: Tensor,
    pub q: Tensor,
    pub u_prev: Tensor,
    pub q_prev: Tensor,
    pub tau: f64,
    /// Smallest stepsize accepted so far.
    pub tau_min: f64,
    pub k: usize,
    pub energy: f64,
    pub surrogate: f64,
    pub grad: Tensor,
    pub grad_norm: f64,
    pub warm: WarmStart,
}

impl SolverState {
    /// Starts from `u0` with `q0` the regularizer's own subgradient selection.
    pub fn new(e: &dyn SmoothObjective, r: &dyn BregmanFunction, u0: Tensor, tau0: f64) -> Result<Self> {
        let q0 = r.initial_subgradient(&u0)?;
        Self::with_subgradient(e, r, u0, q0, tau0)
    }

    pub fn with_subgradient(
        e: &dyn SmoothObjective,
        r: &dyn BregmanFunction,
        u0: Tensor,
        q0: Tensor,
        tau0: f64,
    ) -> Result<Self> {
        if u0.shape() != q0.shape() {
            return Err(Error::Dimension(format!(
                "u0 has shape {:?}, q0 {:?}",
                u0.shape(),
                q0.shape()
            )));
        }
        if !(tau0 > 0.0 && tau0.is_finite()) {
            return Err(Error::Argument(format!("tau0 must be positive, got {tau0}")));
        }
        let energy = finite_or(e.value(&u0)?, "initial energy")?;
        let grad = finite_grad(e.gradient(&u0)?)?;
        let surrogate = surrogate_from_energy(energy, r, &u0, &q0, Some(&u0)).unwrap_or(energy);
        Ok(Self {
            grad_norm: grad.norm(),
            u_prev: u0.clone(),
            q_prev: q0.clone(),
            u: u0,
            q: q0,
            tau: tau0,
            tau_min: tau0,
            k: 0,
            energy,
            surrogate,
            grad,
            warm: WarmStart::default(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoppingRule {
    pub max_iter: usize,
    /// Stop as soon as `E(u^k) ≤ η`.
    pub discrepancy_eta: Option<f64>,
    /// Stop once `‖u^{k+1} − u^k‖ ≤ tol`.
    pub iterate_gap_tol: Option<f64>,
}

impl StoppingRule {
    pub fn max_iter(max_iter: usize) -> Self {
        Self { max_iter, discrepancy_eta: None, iterate_gap_tol: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxIter,
    Discrepancy,
    IterateGap,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::MaxIter => "max_iter",
            StopReason::Discrepancy => "discrepancy",
            StopReason::IterateGap => "iterate_gap",
        }
    }
}

pub const BACKTRACK_SHRINK: f64 = 0.75;
/// A trial stepsize below `TAU_FLOOR * tau0` aborts the run.
pub const TAU_FLOOR: f64 = 1e-16;

#[derive(Clone, Debug, PartialEq)]
pub struct BacktrackingPolicy {
    pub tau0: f64,
    pub shrink: f64,
    /// Slack in the acceptance test `E(u⁺) ≤ E(u) + eps`; defaults to
    /// `1e-12 · max(1, |E(u⁰)|)`.
    pub eps_decrease: Option<f64>,
}

impl BacktrackingPolicy {
    pub fn new(tau0: f64) -> Self {
        Self { tau0, shrink: BACKTRACK_SHRINK, eps_decrease: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 > 0.0 && self.tau0.is_finite()) {
            return Err(Error::Argument(format!("tau0 must be positive, got {}", self.tau0)));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::Argument(format!("shrink factor {} outside (0, 1)", self.shrink)));
        }
        if let Some(eps) = self.eps_decrease {
            if !(eps >= 0.0) {
                return Err(Error::Argument(format!("eps_decrease must be nonnegative, got {eps}")));
            }
        }
        Ok(())
    }

    pub fn resolved_eps(&self, e0: f64) -> f64 {
        self.eps_decrease.unwrap_or(1e-12 * e0.abs().max(1.0))
    }
}

/// Primal/dual candidate from `st` at stepsize `tau`, before any energy is
/// evaluated. Works on a copy of the warm-start state.
fn trial(r: &dyn BregmanFunction, st: &SolverState, tau: f64, method: Method) -> Result<(Tensor, Tensor, WarmStart)> {
    let mut warm = st.warm.clone();
    match method {
        Method::Linbreg => {
            let mut z = st.u.clone();
            z.axpy(tau, &st.q);
            z.axpy(-tau, &st.grad);
            let u_new = r.prox_with(&z, tau, &mut warm)?;
            let q_new = z.sub(&u_new).scale(1.0 / tau);
            Ok((u_new, q_new, warm))
        }
        Method::ProjectedGradient | Method::ProximalGradient => {
            let mut z = st.u.clone();
            z.axpy(-tau, &st.grad);
            let u_new = r.prox_with(&z, tau, &mut warm)?;
            Ok((u_new, st.q.clone(), warm))
        }
    }
}

fn accept(
    e: &dyn SmoothObjective,
    r: &dyn BregmanFunction,
    st: &SolverState,
    cand: (Tensor, Tensor, WarmStart),
    energy: f64,
    tau: f64,
    method: Method,
) -> Result<SolverState> {
    let (u, q, warm) = cand;
    let grad = finite_grad(e.gradient(&u)?)?;
    let surrogate = match method {
        Method::Linbreg => surrogate_from_energy(energy, r, &u, &st.q, Some(&st.u))?,
        _ => energy + r.value(&u),
    };
    Ok(SolverState {
        grad_norm: grad.norm(),
        u_prev: st.u.clone(),
        q_prev: st.q.clone(),
        u,
        q,
        tau,
        tau_min: st.tau_min.min(tau),
        k: st.k + 1,
        energy,
        surrogate,
        grad,
        warm,
    })
}

fn plain_step(e: &dyn SmoothObjective, r: &dyn BregmanFunction, st: &SolverState, method: Method) -> Result<SolverState> {
    let cand = trial(r, st, st.tau, method)?;
    let energy = finite_or(e.value(&cand.0)?, "energy")?;
    accept(e, r, st, cand, energy, st.tau, method)
}

/// One linearised Bregman step at `st.tau`, without backtracking.
pub fn linbreg_step(e: &dyn SmoothObjective, r: &dyn BregmanFunction, st: &SolverState) -> Result<SolverState> {
    plain_step(e, r, st, Method::Linbreg)
}

/// One projected gradient step; `projection` is the indicator of the feasible set.
pub fn projected_gradient_step(
    e: &dyn SmoothObjective,
    projection: &dyn BregmanFunction,
    st: &SolverState,
) -> Result<SolverState> {
    plain_step(e, projection, st, Method::ProjectedGradient)
}

pub fn proximal_gradient_step(e: &dyn SmoothObjective, r: &dyn BregmanFunction, st: &SolverState) -> Result<SolverState> {
    plain_step(e, r, st, Method::ProximalGradient)
}

/// Repeats the step from the same `(u, q)` with `τ ← shrink·τ` until
/// `E(u⁺) ≤ E(u) + eps`. The accepted stepsize carries over to the next step.
pub fn backtrack(
    e: &dyn SmoothObjective,
    r: &dyn BregmanFunction,
    st: &SolverState,
    policy: &BacktrackingPolicy,
    eps: f64,
    method: Method,
) -> Result<SolverState> {
    let mut tau = st.tau;
    loop {
        let cand = trial(r, st, tau, method)?;
        let energy = e.value(&cand.0)?;
        if energy.is_finite() && energy <= st.energy + eps {
            return accept(e, r, st, cand, energy, tau, method);
        }
        tau *= policy.shrink;
        if tau < TAU_FLOOR * policy.tau0 {
            return Err(Error::Stagnation { tau, tau0: policy.tau0, k: st.k });
        }
    }
}

fn surrogate_from_energy(
    energy: f64,
    r: &dyn BregmanFunction,
    x: &Tensor,
    y: &Tensor,
    fallback: Option<&Tensor>,
) -> Result<f64> {
    if let Some(conj) = r.conjugate_value(y) {
        return Ok(energy + r.value(x) + conj - x.dot(y));
    }
    match fallback {
        Some(v) => Ok(energy + bregman_distance(r, x, v, y)),
        None => Err(Error::Unsupported("surrogate needs a conjugate or a base point".into())),
    }
}

/// `F(x, y) = E(x) + R(x) + R*(y) − ⟨x, y⟩`, or `E(x) + D_R^y(x, v)` when
/// `R*` has no closed form and `y ∈ ∂R(v)`.
pub fn surrogate_value(
    e: &dyn SmoothObjective,
    r: &dyn BregmanFunction,
    x: &Tensor,
    y: &Tensor,
    fallback: Option<&Tensor>,
) -> Result<f64> {
    surrogate_from_energy(e.value(x)?, r, x, y, fallback)
}

/// `r^k = (∇E(u^k) + q^k − q^{k−1}, u^{k−1} − u^k)`, a subgradient of the
/// surrogate at `s^k`.
pub fn surrogate_subgradient(st: &SolverState) -> Result<(Tensor, Tensor)> {
    if st.k == 0 {
        return Err(Error::Unsupported("surrogate subgradient needs a completed step".into()));
    }
    let first = st.grad.add(&st.q).sub(&st.q_prev);
    Ok((first, st.u_prev.sub(&st.u)))
}

/// Indices of records violating `F(s^{k+1}) + ρ₁‖Δ‖² ≤ F(s^k)` beyond
/// `1e-10·(1 + |F(s^k)|)`, with `ρ₁ = max(0, 1/τ − L/2)`.
pub fn check_sufficient_decrease(records: &[MonitorRecord], surrogate0: f64, lipschitz: f64) -> Vec<usize> {
    let mut prev = surrogate0;
    let mut bad = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let rho1 = (1.0 / rec.tau - 0.5 * lipschitz).max(0.0);
        if rec.surrogate + rho1 * rec.iterate_gap.powi(2) > prev + 1e-10 * (1.0 + prev.abs()) {
            bad.push(i);
        }
        prev = rec.surrogate;
    }
    bad
}

/// Options that do not change the iterates.
#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub method: Method,
    /// Overrides `E.lipschitz()` for the monitors.
    pub lipschitz: Option<f64>,
    /// Evaluates the Fenchel residual of `q^k` at `u^k` every step.
    pub certify_dual: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { method: Method::Linbreg, lipschitz: None, certify_dual: false }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub state: SolverState,
    pub records: Vec<MonitorRecord>,
    pub reason: StopReason,
    /// Surrogate at the starting state.
    pub surrogate0: f64,
}

pub type Observer<'a> = dyn FnMut(&SolverState, &MonitorRecord) -> Result<()> + 'a;

pub fn run(
    e: &dyn SmoothObjective,
    r: &dyn BregmanFunction,
    st0: SolverState,
    policy: &BacktrackingPolicy,
    stop: &StoppingRule,
    opts: RunOptions,
) -> Result<RunOutcome> {
    run_observed(e, r, st0, policy, stop, opts, &mut |_, _| Ok(()))
}

/// [`run`] with a callback invoked after every accepted step.
pub fn run_observed(
    e: &dyn SmoothObjective,
    r: &dyn BregmanFunction,
    st0: SolverState,
    policy: &BacktrackingPolicy,
    stop: &StoppingRule,
    opts: RunOptions,
    observer: &mut Observer<'_>,
) -> Result<RunOutcome> {
    policy.validate()?;
    let lipschitz = opts.lipschitz.or_else(|| e.lipschitz());
    let eps = policy.resolved_eps(st0.energy);
    let surrogate0 = st0.surrogate;
    let mut st = st0;
    let mut records = Vec::new();
    let mut reason = StopReason::MaxIter;

    while st.k < stop.max_iter {
        if stop.discrepancy_eta.is_some_and(|eta| st.energy <= eta) {
            reason = StopReason::Discrepancy;
            break;
        }
        let next = backtrack(e, r, &st, policy, eps, opts.method)?;
        let rec = MonitorRecord::from_step(r, &st, &next, lipschitz, opts)?;
        observer(&next, &rec)?;
        let gap = rec.iterate_gap;
        records.push(rec);
        st = next;
        if stop.iterate_gap_tol.is_some_and(|tol| gap <= tol) {
            reason = StopReason::IterateGap;
            break;
        }
    }
    Ok(RunOutcome { state: st, records, reason, surrogate0 })
}

#[cfg(test)]
mod tests;
