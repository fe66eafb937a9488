use super::{band, check_len, check_tau, BregmanFunction, WarmStart};
use crate::error::{Error, Result};
use crate::tensor::{svd_thin, Tensor};

/// Relative cut-off below which singular values count as zero when forming
/// the subgradient `U_r V_rᵀ`.
const RANK_TOL: f64 = 1e-12;

/// Singular value soft-thresholding of a 2-D tensor.
pub fn prox_nuclear(a: &Tensor, lambda: f64) -> Result<Tensor> {
    if !(lambda >= 0.0) {
        return Err(Error::Argument(format!("threshold must be nonnegative, got {lambda}")));
    }
    let svd = svd_thin(a)?;
    let d: Vec<f64> = svd.s.iter().map(|s| (s - lambda).max(0.0)).collect();
    svd.compose(&d)
}

/// `R(A) = α ‖A‖_*` on `rows x cols` matrices stored in any shape of that size.
#[derive(Clone, Copy, Debug)]
pub struct Nuclear {
    pub alpha: f64,
    pub rows: usize,
    pub cols: usize,
}

impl Nuclear {
    pub fn new(alpha: f64, rows: usize, cols: usize) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) || rows == 0 || cols == 0 {
            return Err(Error::Argument("nuclear norm needs alpha >= 0 and a nonempty shape".into()));
        }
        Ok(Self { alpha, rows, cols })
    }

    fn matrix(&self, u: &Tensor) -> Result<Tensor> {
        check_len(u, self.rows * self.cols, "nuclear norm")?;
        u.reshape(&[self.rows, self.cols])
    }
}

impl BregmanFunction for Nuclear {
    fn value(&self, u: &Tensor) -> f64 {
        match self.matrix(u).and_then(|m| svd_thin(&m)) {
            Ok(svd) => self.alpha * svd.s.iter().sum::<f64>(),
            Err(_) => f64::NAN,
        }
    }

    fn prox_with(&self, z: &Tensor, tau: f64, _warm: &mut WarmStart) -> Result<Tensor> {
        check_tau(tau)?;
        prox_nuclear(&self.matrix(z)?, tau * self.alpha)?.into_shape(z.shape())
    }

    fn initial_subgradient(&self, u: &Tensor) -> Result<Tensor> {
        let svd = svd_thin(&self.matrix(u)?)?;
        let smax = svd.s.first().copied().unwrap_or(0.0);
        let d: Vec<f64> =
            svd.s.iter().map(|&s| if s > RANK_TOL * smax && s > 0.0 { self.alpha } else { 0.0 }).collect();
        svd.compose(&d)?.into_shape(u.shape())
    }

    fn conjugate_value(&self, q: &Tensor) -> Option<f64> {
        let svd = svd_thin(&self.matrix(q).ok()?).ok()?;
        let smax = svd.s.first().copied().unwrap_or(0.0);
        Some(if smax <= self.alpha + band(self.alpha) { 0.0 } else { f64::INFINITY })
    }
}
