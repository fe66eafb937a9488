use std::io::Write;

use super::{Method, RunOptions, SolverState};
use crate::error::{Error, Result};
use crate::regularizers::{fenchel_residual, BregmanFunction};

pub const CSV_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 10] = [
    "k",
    "tau",
    "energy",
    "surrogate",
    "iterate_gap",
    "breg_sym",
    "r_norm",
    "rho2_bound",
    "decrease_ok",
    "bound_ok",
];

/// Convergence diagnostics of one accepted step `u^{k−1} → u^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct MonitorRecord {
    pub k: usize,
    /// Stepsize used for the step.
    pub tau: f64,
    pub energy: f64,
    /// `F(s^k)`.
    pub surrogate: f64,
    /// `‖u^k − u^{k−1}‖`.
    pub iterate_gap: f64,
    /// `⟨q^k − q^{k−1}, u^k − u^{k−1}⟩`.
    pub breg_sym: f64,
    /// `‖r^k‖`.
    pub r_norm: f64,
    /// `−⟨∇E(u^{k−1}), u^k − u^{k−1}⟩`.
    pub descent: f64,
    /// `(1 + L + 1/τ_min)‖u^k − u^{k−1}‖`, when `L` is known.
    pub rho2_bound: Option<f64>,
    pub decrease_ok: Option<bool>,
    pub bound_ok: Option<bool>,
    /// Fenchel residual of `(u^k, q^k)` when requested and computable.
    pub dual_residual: Option<f64>,
}

impl MonitorRecord {
    pub(crate) fn from_step(
        r: &dyn BregmanFunction,
        prev: &SolverState,
        next: &SolverState,
        lipschitz: Option<f64>,
        opts: RunOptions,
    ) -> Result<Self> {
        let delta = next.u.sub(&prev.u);
        let gap = delta.norm();
        let descent = -prev.grad.dot(&delta);
        let (breg_sym, r_norm) = match opts.method {
            Method::Linbreg => {
                let first = next.grad.add(&next.q).sub(&prev.q);
                (next.q.sub(&prev.q).dot(&delta), (first.norm_sq() + delta.norm_sq()).sqrt())
            }
            // subgradient of E + R at u⁺ implied by the prox step
            _ => {
                let mut first = next.grad.sub(&prev.grad);
                first.axpy(-1.0 / next.tau, &delta);
                (0.0, first.norm())
            }
        };
        let rho2_bound = lipschitz.map(|l| (1.0 + l + 1.0 / next.tau_min) * gap);
        let bound_ok = rho2_bound.map(|b| r_norm <= b + 1e-9 * (1.0 + b));
        let decrease_ok = match (opts.method, lipschitz) {
            (Method::Linbreg, Some(l)) => {
                let rho1 = (1.0 / next.tau - 0.5 * l).max(0.0);
                let f0 = prev.surrogate;
                Some(next.surrogate + rho1 * gap * gap <= f0 + 1e-10 * (1.0 + f0.abs()))
            }
            _ => None,
        };
        let dual_residual = if opts.certify_dual && opts.method == Method::Linbreg {
            match fenchel_residual(r, &next.u, &next.q) {
                Ok(v) => Some(v),
                Err(Error::Unsupported(_)) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        Ok(Self {
            k: next.k,
            tau: next.tau,
            energy: next.energy,
            surrogate: next.surrogate,
            iterate_gap: gap,
            breg_sym,
            r_norm,
            descent,
            rho2_bound,
            decrease_ok,
            bound_ok,
            dual_residual,
        })
    }

    /// `|descent − (‖Δ‖²/τ + D_symm)|` relative to `1 + |descent|`.
    pub fn identity_residual(&self) -> f64 {
        let rhs = self.iterate_gap.powi(2) / self.tau + self.breg_sym;
        (self.descent - rhs).abs() / (1.0 + self.descent.abs())
    }

    /// The ten fixed columns, formatted with round-trip precision.
    pub fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        let flag = |v: Option<bool>| match v {
            Some(true) => "1".to_string(),
            Some(false) => "0".to_string(),
            None => "NA".to_string(),
        };
        vec![
            self.k.to_string(),
            self.tau.to_string(),
            self.energy.to_string(),
            self.surrogate.to_string(),
            self.iterate_gap.to_string(),
            self.breg_sym.to_string(),
            self.r_norm.to_string(),
            opt(self.rho2_bound),
            flag(self.decrease_ok),
            flag(self.bound_ok),
        ]
    }
}

/// Writes a versioned CSV: a `# linbreg-monitor v{N}` line, the header with
/// `extra_names` appended, then one row per record with `extras[i]` appended.
pub fn write_monitor_csv<W: Write>(
    mut w: W,
    records: &[MonitorRecord],
    extra_names: &[String],
    extras: &[Vec<f64>],
) -> Result<()> {
    if extras.len() != records.len() && !(extras.is_empty() && extra_names.is_empty()) {
        return Err(Error::Dimension(format!(
            "{} records but {} extra rows",
            records.len(),
            extras.len()
        )));
    }
    let io = |e: std::io::Error| Error::io("writing monitor csv", e);
    writeln!(w, "# linbreg-monitor v{CSV_VERSION}").map_err(io)?;
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    header.extend(extra_names.iter().map(String::as_str));
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for (i, rec) in records.iter().enumerate() {
        let mut row = rec.csv_fields();
        if let Some(ex) = extras.get(i) {
            if ex.len() != extra_names.len() {
                return Err(Error::Dimension(format!("extra row {i} has {} values", ex.len())));
            }
            row.extend(ex.iter().map(|v| if v.is_nan() { "NA".to_string() } else { v.to_string() }));
        }
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    Ok(())
}
