//! Dense matrix products and the thin SVD.

use nalgebra::DMatrix;

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transpose {
    No,
    Yes,
}

/// `op(a) * op(b)` for 2-D tensors.
pub fn matmul(a: &Tensor, ta: Transpose, b: &Tensor, tb: Transpose) -> Result<Tensor> {
    let (ar, ac) = a.dims2()?;
    let (br, bc) = b.dims2()?;
    let (m, k, rsa, csa) = match ta {
        Transpose::No => (ar, ac, ac as isize, 1),
        Transpose::Yes => (ac, ar, 1, ac as isize),
    };
    let (k2, n, rsb, csb) = match tb {
        Transpose::No => (br, bc, bc as isize, 1),
        Transpose::Yes => (bc, br, 1, bc as isize),
    };
    if k != k2 {
        return Err(Error::Dimension(format!(
            "matmul inner extents differ: {m}x{k} times {k2}x{n}"
        )));
    }
    let mut out = vec![0.0; m * n];
    // SAFETY: the pointers cover `m*k`, `k*n` and `m*n` elements with the
    // strides computed above, all within the owned buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data().as_ptr(),
            rsa,
            csa,
            b.data().as_ptr(),
            rsb,
            csb,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Ok(Tensor::from_parts(&[m, n], out))
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ`.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `m x r`, orthonormal columns.
    pub u: Tensor,
    /// Nonincreasing, nonnegative, length `r = min(m, n)`.
    pub s: Vec<f64>,
    /// `n x r`, orthonormal columns.
    pub v: Tensor,
}

impl Svd {
    /// Reassembles `U diag(d) Vᵀ` with replacement singular values.
    pub fn compose(&self, d: &[f64]) -> Result<Tensor> {
        let (m, r) = self.u.dims2()?;
        let mut us = self.u.clone();
        for i in 0..m {
            for j in 0..r {
                let v = us.at2(i, j) * d[j];
                us.set2(i, j, v);
            }
        }
        matmul(&us, Transpose::No, &self.v, Transpose::Yes)
    }
}

const SVD_MAX_SWEEPS: usize = 10_000;
/// Convergence thresholds handed to the implicit-shift iteration, tried in
/// order on the matrix and on its transpose. A single threshold can stop
/// without deflating and return inaccurate factors, so every attempt is
/// verified and the next one tried on failure.
const SVD_EPS: [f64; 3] = [5.0 * f64::EPSILON, f64::EPSILON, 1e-14];
/// Relative reconstruction and orthonormality error above which a
/// decomposition is rejected.
const SVD_RECONSTRUCTION_TOL: f64 = 1e-10;

fn svd_attempt(a: &Tensor, transpose: bool, eps: f64) -> Option<Svd> {
    let (m, n) = a.dims2().ok()?;
    let r = m.min(n);
    let mat = DMatrix::from_row_slice(m, n, a.data());
    let mat = if transpose { mat.transpose() } else { mat };
    let svd = nalgebra::linalg::SVD::try_new(mat, true, true, eps, SVD_MAX_SWEEPS)?;
    let (u, v_t) = (svd.u?, svd.v_t?);
    // for the transpose, A = V Σ Uᵀ
    let (left, right_t) = if transpose { (v_t.transpose(), u.transpose()) } else { (u, v_t) };

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s = order.iter().map(|&i| svd.singular_values[i].max(0.0)).collect();
    let u_t = Tensor::from_fn2(m, r, |i, j| left[(i, order[j])]);
    let v_t = Tensor::from_fn2(n, r, |i, j| right_t[(order[j], i)]);
    let out = Svd { u: u_t, s, v: v_t };

    let err = out.compose(&out.s).ok()?.sub(a).norm();
    if err > SVD_RECONSTRUCTION_TOL * a.norm().max(f64::MIN_POSITIVE) {
        return None;
    }
    for f in [&out.u, &out.v] {
        let g = matmul(f, Transpose::Yes, f, Transpose::No).ok()?;
        let off = (0..r).flat_map(|i| (0..r).map(move |j| (i, j)));
        if off.map(|(i, j)| (g.at2(i, j) - if i == j { 1.0 } else { 0.0 }).abs()).fold(0.0, f64::max)
            > SVD_RECONSTRUCTION_TOL
        {
            return None;
        }
    }
    Some(out)
}

pub fn svd_thin(a: &Tensor) -> Result<Svd> {
    let (m, n) = a.dims2()?;
    if !a.is_finite() {
        return Err(Error::Numerical("svd of a matrix with non-finite entries".into()));
    }
    SVD_EPS
        .iter()
        .flat_map(|&eps| [(false, eps), (true, eps)])
        .find_map(|(t, eps)| svd_attempt(a, t, eps))
        .ok_or_else(|| Error::Numerical(format!("svd of a {m}x{n} matrix did not reach an accurate factorisation")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = a.dims2().unwrap();
        let (_, n) = b.dims2().unwrap();
        Tensor::from_fn2(m, n, |i, j| (0..k).map(|l| a.at2(i, l) * b.at2(l, j)).sum())
    }

    fn transpose(a: &Tensor) -> Tensor {
        let (m, n) = a.dims2().unwrap();
        Tensor::from_fn2(n, m, |i, j| a.at2(j, i))
    }

    #[test]
    fn matmul_all_transposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let a = Tensor::from_fn2(3, 4, |_, _| rng.random_range(-1.0..1.0));
        let b = Tensor::from_fn2(4, 2, |_, _| rng.random_range(-1.0..1.0));
        let expect = naive(&a, &b);
        let cases = [
            matmul(&a, Transpose::No, &b, Transpose::No).unwrap(),
            matmul(&transpose(&a), Transpose::Yes, &b, Transpose::No).unwrap(),
            matmul(&a, Transpose::No, &transpose(&b), Transpose::Yes).unwrap(),
            matmul(&transpose(&a), Transpose::Yes, &transpose(&b), Transpose::Yes).unwrap(),
        ];
        for c in cases {
            for (x, y) in c.data().iter().zip(expect.data()) {
                assert!((x - y).abs() < 1e-14);
            }
        }
        assert!(matmul(&a, Transpose::No, &a, Transpose::No).is_err());
    }

    #[test]
    fn diagonal_and_zero() {
        let d = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 3.0]).unwrap();
        let svd = svd_thin(&d).unwrap();
        assert!((svd.s[0] - 3.0).abs() < 1e-14 && (svd.s[1] - 1.0).abs() < 1e-14);
        let z = svd_thin(&Tensor::zeros(&[3, 2])).unwrap();
        assert!(z.s.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn rank_deficient_wide_matrix() {
        // rank-2 3x4 matrix with known singular values
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let g = Tensor::from_fn2(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let q = svd_thin(&g).unwrap().u;
        let h = Tensor::from_fn2(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let p = svd_thin(&h).unwrap().u;
        let d = [1.5469, 1.0307, 0.0];
        let pd = Tensor::from_fn2(3, 3, |i, j| p.at2(i, j) * d[j]);
        let q3 = Tensor::from_fn2(4, 3, |i, j| q.at2(i, j));
        let a = matmul(&pd, Transpose::No, &q3, Transpose::Yes).unwrap();
        let s = svd_thin(&a).unwrap().s;
        for (x, y) in s.iter().zip(d) {
            assert!((x - y).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn threshold_sensitive_wide_matrix() {
        // rank-4 10x16 matrix on which the default threshold alone fails
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let d = [0.2142, 0.1327, 7.361e-4, 2.511e-4];
        let l = Tensor::from_fn2(10, 4, |_, _| rng.random_range(0.0..1.0));
        let r = Tensor::from_fn2(4, 16, |_, _| rng.random_range(0.0..1.0));
        let lq = svd_thin(&l).unwrap().u;
        let rq = svd_thin(&r).unwrap().v;
        let ld = Tensor::from_fn2(10, 4, |i, j| lq.at2(i, j) * d[j]);
        let a = matmul(&ld, Transpose::No, &rq, Transpose::Yes).unwrap();
        let svd = svd_thin(&a).unwrap();
        for (x, y) in svd.s.iter().zip(d) {
            assert!((x - y).abs() < 1e-12, "{:?}", svd.s);
        }
        assert!(svd.s[4..].iter().all(|&v| v < 1e-12));
    }

    #[test]
    fn random_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for (m, n) in [(4, 3), (3, 4), (5, 5)] {
            let a = Tensor::from_fn2(m, n, |_, _| rng.random_range(-1.0..1.0));
            let svd = svd_thin(&a).unwrap();
            assert!(svd.s.windows(2).all(|w| w[0] >= w[1]) && svd.s.iter().all(|&s| s >= 0.0));
            let back = svd.compose(&svd.s).unwrap();
            let err = back.sub(&a).norm();
            assert!(err <= 1e-10 * a.norm(), "reconstruction error {err}");
            for f in [&svd.u, &svd.v] {
                let g = matmul(f, Transpose::Yes, f, Transpose::No).unwrap();
                let (r, _) = g.dims2().unwrap();
                for i in 0..r {
                    for j in 0..r {
                        let e = if i == j { 1.0 } else { 0.0 };
                        assert!((g.at2(i, j) - e).abs() <= 1e-10);
                    }
                }
            }
        }
    }
}
