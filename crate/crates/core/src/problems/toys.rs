use crate::error::{Error, Result};
use crate::objective::SmoothObjective;
use crate::regularizers::NonNegative;
use crate::solver::{linbreg_step, SolverState};
use crate::tensor::{matmul, svd_thin, Tensor, Transpose};

/// `E(x) = ½‖A x − f‖²` for `x` of any shape with `A.cols` entries.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    a: Tensor,
    f: Tensor,
    lipschitz: f64,
}

impl LeastSquares {
    pub fn new(a: Tensor, f: Tensor) -> Result<Self> {
        let (m, _) = a.dims2()?;
        if f.len() != m {
            return Err(Error::Dimension(format!("A has {m} rows, f has {} entries", f.len())));
        }
        let smax = svd_thin(&a)?.s.first().copied().unwrap_or(0.0);
        Ok(Self { a, f: f.flatten(), lipschitz: smax * smax })
    }

    /// `E(x) = ½‖x − f‖²`.
    pub fn denoising(f: Tensor) -> Self {
        let n = f.len();
        let a = Tensor::from_fn2(n, n, |i, j| if i == j { 1.0 } else { 0.0 });
        Self { a, f: f.flatten(), lipschitz: 1.0 }
    }

    pub fn operator(&self) -> &Tensor {
        &self.a
    }

    pub fn data(&self) -> &Tensor {
        &self.f
    }

    fn residual(&self, x: &Tensor) -> Result<Tensor> {
        let (_, n) = self.a.dims2()?;
        if x.len() != n {
            return Err(Error::Dimension(format!("expected {n} unknowns, got {}", x.len())));
        }
        let col = x.reshape(&[n, 1])?;
        Ok(matmul(&self.a, Transpose::No, &col, Transpose::No)?.flatten().sub(&self.f))
    }
}

impl SmoothObjective for LeastSquares {
    fn value(&self, x: &Tensor) -> Result<f64> {
        Ok(0.5 * self.residual(x)?.norm_sq())
    }

    fn gradient(&self, x: &Tensor) -> Result<Tensor> {
        let res = self.residual(x)?;
        let m = res.len();
        let g = matmul(&self.a, Transpose::Yes, &res.into_shape(&[m, 1])?, Transpose::No)?;
        g.into_shape(x.shape())
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.lipschitz)
    }
}

/// `E(u) = (u + 1)²/2` on the real line, paired with `R = χ_{≥0}`. The
/// linearised Bregman iterates settle at `u = 0`, which is not critical for `E`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Counterexample;

impl SmoothObjective for Counterexample {
    fn value(&self, u: &Tensor) -> Result<f64> {
        Ok(u.data().iter().map(|v| 0.5 * (v + 1.0) * (v + 1.0)).sum())
    }

    fn gradient(&self, u: &Tensor) -> Result<Tensor> {
        Ok(u.map(|v| v + 1.0))
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// `(u^k, q^k)` for `k = 0..=steps` from `u⁰ > 0`, `q⁰ = 0`, `τ = 1`.
pub fn counterexample_run(u0: f64, steps: usize) -> Result<Vec<(f64, f64)>> {
    if !(u0 > 0.0 && u0.is_finite()) {
        return Err(Error::Argument(format!("u0 must be positive, got {u0}")));
    }
    let e = Counterexample;
    let r = NonNegative;
    let start = Tensor::vector(vec![u0])?;
    let mut st = SolverState::with_subgradient(&e, &r, start, Tensor::zeros(&[1]), 1.0)?;
    let mut out = vec![(st.u.data()[0], st.q.data()[0])];
    for _ in 0..steps {
        st = linbreg_step(&e, &r, &st)?;
        out.push((st.u.data()[0], st.q.data()[0]));
    }
    Ok(out)
}
