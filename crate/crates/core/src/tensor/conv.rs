//! Periodic 2-D convolution, its adjoint, and the gradient with respect to the kernel.
//!
//! Kernels are anchored at `(kh / 2, kw / 2)`, so
//! `(u * h)[x, y] = sum_{a, b} h[a, b] u[x - (a - ca), y - (b - cb)]`
//! with indices taken modulo the image extents.

use super::Tensor;
use crate::error::{Error, Result};

/// Anchor (centre) index of a kernel of the given extents.
pub fn kernel_anchor(kh: usize, kw: usize) -> (usize, usize) {
    (kh / 2, kw / 2)
}

fn check_pair(image: &Tensor, kernel: &Tensor) -> Result<(usize, usize, usize, usize)> {
    let (h, w) = image.dims2()?;
    let (kh, kw) = kernel.dims2()?;
    if kh > h || kw > w {
        return Err(Error::Dimension(format!(
            "kernel {kh}x{kw} is larger than image {h}x{w}"
        )));
    }
    Ok((h, w, kh, kw))
}

#[inline]
fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// Circular convolution `u * h`.
pub fn conv2d_periodic(u: &Tensor, h: &Tensor) -> Result<Tensor> {
    let (rows, cols, kh, kw) = check_pair(u, h)?;
    let (ca, cb) = kernel_anchor(kh, kw);
    let mut out = vec![0.0; rows * cols];
    let ud = u.data();
    for a in 0..kh {
        for b in 0..kw {
            let hv = h.at2(a, b);
            if hv == 0.0 {
                continue;
            }
            let da = a as isize - ca as isize;
            let db = b as isize - cb as isize;
            for x in 0..rows {
                let sx = wrap(x as isize - da, rows);
                let orow = &mut out[x * cols..(x + 1) * cols];
                let urow = &ud[sx * cols..(sx + 1) * cols];
                for (y, o) in orow.iter_mut().enumerate() {
                    *o += hv * urow[wrap(y as isize - db, cols)];
                }
            }
        }
    }
    Ok(Tensor::from_parts(&[rows, cols], out))
}

/// Adjoint of `u -> u * h`: circular correlation of `v` with `h`.
pub fn conv2d_periodic_adjoint(v: &Tensor, h: &Tensor) -> Result<Tensor> {
    let (rows, cols, kh, kw) = check_pair(v, h)?;
    let (ca, cb) = kernel_anchor(kh, kw);
    let mut out = vec![0.0; rows * cols];
    let vd = v.data();
    for a in 0..kh {
        for b in 0..kw {
            let hv = h.at2(a, b);
            if hv == 0.0 {
                continue;
            }
            let da = a as isize - ca as isize;
            let db = b as isize - cb as isize;
            for x in 0..rows {
                let sx = wrap(x as isize + da, rows);
                let orow = &mut out[x * cols..(x + 1) * cols];
                let vrow = &vd[sx * cols..(sx + 1) * cols];
                for (y, o) in orow.iter_mut().enumerate() {
                    *o += hv * vrow[wrap(y as isize + db, cols)];
                }
            }
        }
    }
    Ok(Tensor::from_parts(&[rows, cols], out))
}

/// Gradient of `½‖u * h − f‖²` with respect to `h`, given the residual
/// `r = u * h − f`. Returns a `kh x kw` tensor.
pub fn kernel_gradient(u: &Tensor, r: &Tensor, kernel_shape: (usize, usize)) -> Result<Tensor> {
    u.ensure_same_shape(r, "kernel_gradient")?;
    let (rows, cols) = u.dims2()?;
    let (kh, kw) = kernel_shape;
    if kh == 0 || kw == 0 || kh > rows || kw > cols {
        return Err(Error::Dimension(format!(
            "kernel {kh}x{kw} does not fit image {rows}x{cols}"
        )));
    }
    let (ca, cb) = kernel_anchor(kh, kw);
    let (ud, rd) = (u.data(), r.data());
    let mut g = vec![0.0; kh * kw];
    for a in 0..kh {
        for b in 0..kw {
            let da = a as isize - ca as isize;
            let db = b as isize - cb as isize;
            let mut acc = 0.0;
            for x in 0..rows {
                let sx = wrap(x as isize - da, rows);
                let rrow = &rd[x * cols..(x + 1) * cols];
                let urow = &ud[sx * cols..(sx + 1) * cols];
                for (y, rv) in rrow.iter().enumerate() {
                    acc += rv * urow[wrap(y as isize - db, cols)];
                }
            }
            g[a * kw + b] = acc;
        }
    }
    Ok(Tensor::from_parts(&[kh, kw], g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{dft2, idft2, CTensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Scatter-form oracle: every input pixel pushes its weighted value to the
    /// shifted output location.
    fn scatter_conv(u: &Tensor, h: &Tensor) -> Tensor {
        let (rows, cols) = u.dims2().unwrap();
        let (kh, kw) = h.dims2().unwrap();
        let mut out = Tensor::zeros(&[rows, cols]);
        for i in 0..rows {
            for j in 0..cols {
                for a in 0..kh {
                    for b in 0..kw {
                        let x = (i + a + rows - kh / 2) % rows;
                        let y = (j + b + cols - kw / 2) % cols;
                        let v = out.at2(x, y) + h.at2(a, b) * u.at2(i, j);
                        out.set2(x, y, v);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_leaves_image_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random(&[4, 4], &mut rng);
        let delta = Tensor::full(&[1, 1], 1.0);
        assert_eq!(conv2d_periodic(&u, &delta).unwrap(), u);
        assert_eq!(conv2d_periodic_adjoint(&u, &delta).unwrap(), u);
    }

    #[test]
    fn mean_preserving_kernel_fixes_constants() {
        let u = Tensor::full(&[5, 6], 2.5);
        let h = Tensor::new(&[2, 3], vec![0.1, 0.2, 0.05, 0.3, 0.25, 0.1]).unwrap();
        let out = conv2d_periodic(&u, &h).unwrap();
        assert!(out.data().iter().all(|v| (v - 2.5).abs() < 1e-14));
    }

    #[test]
    fn matches_scatter_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for shape in [[3, 3], [2, 4], [5, 5], [1, 3]] {
            let u = random(&[5, 5], &mut rng);
            let h = random(&shape, &mut rng);
            let fast = conv2d_periodic(&u, &h).unwrap();
            let slow = scatter_conv(&u, &h);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn adjoint_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let u = random(&[5, 5], &mut rng);
            let v = random(&[5, 5], &mut rng);
            let h = random(&[3, 3], &mut rng);
            let lhs = conv2d_periodic(&u, &h).unwrap().dot(&v);
            let rhs = u.dot(&conv2d_periodic_adjoint(&v, &h).unwrap());
            assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn symmetric_kernel_is_self_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random(&[6, 5], &mut rng);
        let h = Tensor::new(&[3, 3], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.4, 0.3, 0.2, 0.1]).unwrap();
        let a = conv2d_periodic(&v, &h).unwrap();
        let b = conv2d_periodic_adjoint(&v, &h).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        let u = Tensor::zeros(&[3, 3]);
        let h = Tensor::zeros(&[4, 1]);
        assert!(matches!(conv2d_periodic(&u, &h), Err(Error::Dimension(_))));
        assert!(matches!(conv2d_periodic_adjoint(&u, &h), Err(Error::Dimension(_))));
    }

    #[test]
    fn agrees_with_spectral_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (kh, kw) in [(3, 5), (2, 2), (6, 8)] {
            let u = random(&[6, 8], &mut rng);
            let h = random(&[kh, kw], &mut rng);
            // zero-pad the kernel with its anchor moved to the origin
            let mut pad = Tensor::zeros(&[6, 8]);
            for a in 0..kh {
                for b in 0..kw {
                    pad.set2((a + 6 - kh / 2) % 6, (b + 8 - kw / 2) % 8, h.at2(a, b));
                }
            }
            let fu = dft2(&CTensor::from_real(&u)).unwrap();
            let fh = dft2(&CTensor::from_real(&pad)).unwrap();
            let scale = (48.0f64).sqrt();
            let prod = fu.zip_map(&fh, |x, y| x * y * scale);
            let spectral = idft2(&prod).unwrap();
            let direct = conv2d_periodic(&u, &h).unwrap();
            for (c, d) in spectral.data().iter().zip(direct.data()) {
                assert!((c.re - d).abs() <= 1e-10 && c.im.abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn kernel_gradient_zero_residual_and_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = random(&[4, 4], &mut rng);
        let g = kernel_gradient(&u, &Tensor::zeros(&[4, 4]), (3, 3)).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));

        let mut delta = Tensor::zeros(&[4, 4]);
        delta.set2(1, 2, 1.0);
        let r = random(&[4, 4], &mut rng);
        let g = kernel_gradient(&delta, &r, (1, 1)).unwrap();
        assert_eq!(g.data()[0], r.at2(1, 2));
    }

    #[test]
    fn kernel_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = random(&[6, 6], &mut rng);
        let h = random(&[3, 3], &mut rng);
        let f = random(&[6, 6], &mut rng);
        let energy = |k: &Tensor| 0.5 * conv2d_periodic(&u, k).unwrap().sub(&f).norm_sq();
        let r = conv2d_periodic(&u, &h).unwrap().sub(&f);
        let g = kernel_gradient(&u, &r, (3, 3)).unwrap();
        let step = 1e-6;
        for i in 0..9 {
            let mut hp = h.clone();
            hp.data_mut()[i] += step;
            let mut hm = h.clone();
            hm.data_mut()[i] -= step;
            let fd = (energy(&hp) - energy(&hm)) / (2.0 * step);
            let rel = (fd - g.data()[i]).abs() / g.data()[i].abs().max(1.0);
            assert!(rel <= 1e-5, "entry {i}: {fd} vs {}", g.data()[i]);
        }
    }
}
