//! Independent numerical oracles: finite-difference gradients and prox
//! optimality certificates.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::objective::SmoothObjective;
use crate::regularizers::BregmanFunction;
use crate::tensor::{div2d, grad2d_forward, GradField, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct FdCheckReport {
    pub max_rel_err: f64,
    pub worst_coordinate: usize,
    pub step: f64,
    pub coordinates: Vec<usize>,
}

/// Default central-difference step `1e-6 · (1 + ‖u‖)`.
pub fn default_fd_step(u: &Tensor) -> f64 {
    1e-6 * (1.0 + u.norm())
}

/// Compares the analytic gradient with central differences on `n_coords`
/// distinct seeded coordinates (all of them if `n_coords ≥ len`).
///
/// The error at coordinate `i` is `|g_i − d_i| / max(|g_i|, |d_i|, 1e-5 (1 + |E(u)|))`;
/// the floor keeps rounding noise in `E` from dominating tiny entries.
pub fn finite_difference_gradient_check(
    e: &dyn SmoothObjective,
    u: &Tensor,
    step: Option<f64>,
    n_coords: usize,
    seed: u64,
) -> Result<FdCheckReport> {
    let h = step.unwrap_or_else(|| default_fd_step(u));
    if !(h > 0.0) {
        return Err(Error::Argument(format!("step must be positive, got {h}")));
    }
    let e0 = e.value(u)?;
    let g = e.gradient(u)?;
    let n = u.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = if n_coords >= n { (0..n).collect() } else { sample(&mut rng, n, n_coords).into_vec() };
    coords.sort_unstable();
    let floor = 1e-5 * (1.0 + e0.abs());
    let mut worst = (0.0, coords.first().copied().unwrap_or(0));
    for &i in &coords {
        let mut up = u.clone();
        up.data_mut()[i] += h;
        let mut dn = u.clone();
        dn.data_mut()[i] -= h;
        let (fp, fm) = (e.value(&up)?, e.value(&dn)?);
        if !(fp.is_finite() && fm.is_finite()) {
            return Err(Error::Numerical(format!("energy not finite near coordinate {i}")));
        }
        let fd = (fp - fm) / (2.0 * h);
        let a = g.data()[i];
        let err = (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
        if err > worst.0 {
            worst = (err, i);
        }
    }
    Ok(FdCheckReport { max_rel_err: worst.0, worst_coordinate: worst.1, step: h, coordinates: coords })
}

fn prox_objective(r: &dyn BregmanFunction, z: &Tensor, tau: f64, x: &Tensor) -> f64 {
    0.5 * x.sub(z).norm_sq() + tau * r.value(x)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxCheckReport {
    /// Upper bound (dual certificate) or lower estimate (descent) of `Φ(prox) − min Φ`.
    pub gap: f64,
    pub tol: f64,
    /// True when the gap comes from a duality certificate.
    pub certified: bool,
}

impl ProxCheckReport {
    pub fn passed(&self) -> bool {
        self.gap <= self.tol
    }
}

/// Checks `R.prox(z, τ)` against `Φ(x) = ½‖x − z‖² + τR(x)`.
///
/// With a closed-form conjugate the gap is the duality gap at `y = z − prox`,
/// where `Φ*(y) = ⟨y, z⟩ − ½‖y‖² − τR*(y/τ)`. Otherwise projected-subgradient
/// descent is run from both `z` and the prox output and the gap is
/// `Φ(prox) − best`, which only detects suboptimality.
pub fn prox_oracle_check(r: &dyn BregmanFunction, z: &Tensor, tau: f64, tol: f64) -> Result<ProxCheckReport> {
    let cand = r.prox(z, tau)?;
    let phi = prox_objective(r, z, tau, &cand);
    if !phi.is_finite() {
        return Err(Error::Numerical("prox output outside the domain".into()));
    }
    let y = z.sub(&cand);
    if let Some(conj) = r.conjugate_value(&y.scale(1.0 / tau)) {
        let lower = y.dot(z) - 0.5 * y.norm_sq() - tau * conj;
        if !lower.is_finite() {
            return Err(Error::Numerical("dual certificate infeasible; oracle inconclusive".into()));
        }
        return Ok(ProxCheckReport { gap: (phi - lower).max(0.0), tol, certified: true });
    }
    let best = [z.clone(), cand]
        .into_iter()
        .map(|x0| subgradient_descent(r, z, tau, x0, 20_000))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok(ProxCheckReport { gap: (phi - best).max(0.0), tol, certified: false })
}

/// Subgradient method with steps `c / √k` and the regularizer's own subgradient
/// selection; returns the best objective seen.
fn subgradient_descent(r: &dyn BregmanFunction, z: &Tensor, tau: f64, mut x: Tensor, iters: usize) -> Result<f64> {
    let mut best = prox_objective(r, z, tau, &x);
    let scale = 1e-2 * (1.0 + z.norm());
    for k in 1..=iters {
        let mut g = x.sub(z);
        let q = r
            .initial_subgradient(&x)
            .map_err(|e| Error::Numerical(format!("subgradient oracle inconclusive: {e}")))?;
        g.axpy(tau, &q);
        let gn = g.norm();
        if gn == 0.0 {
            break;
        }
        x.axpy(-scale / ((k as f64).sqrt() * gn), &g);
        best = best.min(prox_objective(r, z, tau, &x));
    }
    Ok(best)
}

#[derive(Clone, Debug)]
pub struct TvDualSolution {
    pub u: Tensor,
    pub primal: f64,
    pub dual: f64,
    pub iters: usize,
}

/// Accelerated projected gradient with adaptive restart on the TV dual
/// `min_{|p_i| ≤ λ} ½‖z + div p‖²`, stopped once the primal-dual gap
/// `P(u) − D(p)` with `u = z + div p` drops below `gap_tol·(1 + |P|)`.
pub fn tv_dual_oracle(z: &Tensor, lambda: f64, gap_tol: f64, maxit: usize) -> Result<TvDualSolution> {
    let (rows, cols) = z.dims2()?;
    let primal = |u: &Tensor| -> Result<f64> { Ok(0.5 * u.sub(z).norm_sq() + lambda * grad2d_forward(u)?.isotropic_l1()) };
    let dual = |u: &Tensor| 0.5 * z.norm_sq() - 0.5 * u.norm_sq();
    let project = |p: &mut GradField| {
        let (px, py) = p.channels_mut();
        for (a, b) in px.iter_mut().zip(py.iter_mut()) {
            let n = a.hypot(*b);
            if n > lambda {
                let s = if n > 0.0 { lambda / n } else { 0.0 };
                *a *= s;
                *b *= s;
            }
        }
    };
    let step = 1.0 / 8.0;
    let mut p = GradField::zeros(rows, cols);
    let mut y = p.clone();
    let mut t: f64 = 1.0;
    let mut prev_obj = f64::INFINITY;
    let mut restarted = false;
    for it in 1..=maxit {
        let uy = z.add(&div2d(&y)?);
        let mut next = y.clone();
        // ∇_p ½‖z + div p‖² = −∇(z + div p)
        next.tensor_mut().axpy(step, grad2d_forward(&uy)?.tensor());
        project(&mut next);
        let u = z.add(&div2d(&next)?);
        let obj = 0.5 * u.norm_sq();
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // restart momentum on an increase; a plain projected step is always kept
        if obj > prev_obj && !restarted {
            t = 1.0;
            y = p.clone();
            restarted = true;
            continue;
        }
        restarted = false;
        let beta = (t - 1.0) / t_next;
        let mut extrap = next.tensor().scale(1.0 + beta);
        extrap.axpy(-beta, p.tensor());
        y = GradField::from_tensor(extrap)?;
        p = next;
        t = t_next;
        prev_obj = obj;
        if it % 20 == 0 || it == maxit {
            let pv = primal(&u)?;
            let dv = dual(&u);
            if pv - dv <= gap_tol * (1.0 + pv.abs()) {
                return Ok(TvDualSolution { u, primal: pv, dual: dv, iters: it });
            }
        }
    }
    Err(Error::Numerical(format!("TV dual oracle did not reach gap {gap_tol:e} in {maxit} iterations")))
}

/// `Φ(cand) − D(p_oracle)` for the TV prox `Φ(x) = ½‖x − z‖² + λ TV(x)`.
pub fn tv_prox_gap(z: &Tensor, lambda: f64, cand: &Tensor, oracle: &TvDualSolution) -> Result<f64> {
    let phi = 0.5 * cand.sub(z).norm_sq() + lambda * grad2d_forward(cand)?.isotropic_l1();
    Ok((phi - oracle.dual).max(0.0))
}
