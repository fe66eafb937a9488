use super::{check_len, check_tau, BregmanFunction, WarmStart};
use crate::error::{Error, Result};
use crate::inner::{pdhg_tv_prox, PdhgConfig};
use crate::tensor::{div2d, grad2d_forward, GradField, Tensor};

/// Isotropic total variation `Σ_i |(∇u)_i|` of a 2-D tensor.
pub fn total_variation(u: &Tensor) -> Result<f64> {
    Ok(grad2d_forward(u)?.isotropic_l1())
}

/// Total-variation prox with default PDHG steps.
pub fn prox_tv(z: &Tensor, lambda: f64, tol: f64, maxit: usize) -> Result<Tensor> {
    let cfg = PdhgConfig { tol, maxit, ..Default::default() };
    Ok(pdhg_tv_prox(z, lambda, &cfg, None)?.u)
}

/// `R(u) = α TV(u)` on `rows x cols` images. The prox is computed iteratively;
/// with `strict` unset an unconverged inner solve returns its best iterate
/// and logs a warning instead of failing.
#[derive(Clone, Debug)]
pub struct TotalVariation {
    pub alpha: f64,
    pub rows: usize,
    pub cols: usize,
    pub inner: PdhgConfig,
    pub strict: bool,
}

impl TotalVariation {
    pub fn new(alpha: f64, rows: usize, cols: usize) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) || rows * cols < 2 {
            return Err(Error::Argument("TV needs alpha >= 0 and at least two pixels".into()));
        }
        Ok(Self { alpha, rows, cols, inner: PdhgConfig::default(), strict: true })
    }

    pub fn with_inner(mut self, inner: PdhgConfig) -> Result<Self> {
        inner.validate()?;
        self.inner = inner;
        Ok(self)
    }

    pub fn lenient(mut self) -> Self {
        self.strict = false;
        self
    }

    fn image(&self, u: &Tensor) -> Result<Tensor> {
        check_len(u, self.rows * self.cols, "total variation")?;
        u.reshape(&[self.rows, self.cols])
    }
}

impl BregmanFunction for TotalVariation {
    fn value(&self, u: &Tensor) -> f64 {
        match self.image(u).and_then(|m| total_variation(&m)) {
            Ok(tv) => self.alpha * tv,
            Err(_) => f64::NAN,
        }
    }

    /// The warm dual is stored normalised, `P = p / (τα)`, so a subgradient
    /// `q = −div(αP)` from the previous step seeds the solve at the exact
    /// gradient step whatever the current `τ`.
    fn prox_with(&self, z: &Tensor, tau: f64, warm: &mut WarmStart) -> Result<Tensor> {
        check_tau(tau)?;
        let img = self.image(z)?;
        let lambda = tau * self.alpha;
        let normalised = warm.dual.take();
        let seed = normalised.as_ref().and_then(|t| GradField::from_tensor(t.scale(lambda)).ok());
        match pdhg_tv_prox(&img, lambda, &self.inner, seed.as_ref()) {
            Ok(out) => {
                warm.last_gap = Some(out.gap);
                warm.dual = (lambda > 0.0).then(|| out.dual.into_tensor().scale(1.0 / lambda));
                out.u.into_shape(z.shape())
            }
            Err(Error::InnerNotConverged { best, gap, iters }) if !self.strict => {
                log::warn!("TV prox stopped at relative gap {gap:e} after {iters} iterations");
                warm.last_gap = Some(gap);
                warm.dual = normalised;
                best.into_shape(z.shape())
            }
            Err(e) => Err(e),
        }
    }

    /// Canonical selection `−div p` with `p = α ∇u / |∇u|` where the gradient
    /// is nonzero and `p = 0` elsewhere.
    fn initial_subgradient(&self, u: &Tensor) -> Result<Tensor> {
        let img = self.image(u)?;
        let mut g = grad2d_forward(&img)?;
        let (px, py) = g.channels_mut();
        for (a, b) in px.iter_mut().zip(py.iter_mut()) {
            let n = a.hypot(*b);
            if n > 0.0 {
                *a *= self.alpha / n;
                *b *= self.alpha / n;
            }
        }
        div2d(&g)?.scale(-1.0).into_shape(u.shape())
    }
}
