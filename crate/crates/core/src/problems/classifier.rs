//! Layered classifier `K(A₁..A_l) = ρ₁(A₁ ρ₂(A₂ … ρ_l(A_l D)))` trained on
//! `E = 𝒟(K, Y) + (ε/2) Σ ‖A_j‖²`.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::objective::SmoothObjective;
use crate::regularizers::{compose_separable, BregmanFunction, Nuclear, Separable};
use crate::tensor::{matmul, Tensor, Transpose};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    /// `min(1, max(0, x))`, derivative taken as zero at both kinks.
    Rectifier,
    /// `(x e^{βx} + c e^{βc}) / (e^{βx} + e^{βc})`.
    SmoothMax { beta: f64, c: f64 },
    /// Column-wise `exp(x_i) / Σ_l exp(x_l)`.
    SoftMax,
}

impl Activation {
    pub const DEFAULT_SMOOTH_MAX: Activation = Activation::SmoothMax { beta: 5.0, c: 0.0 };

    fn apply(self, p: &Tensor) -> Result<Tensor> {
        match self {
            Activation::Identity => Ok(p.clone()),
            Activation::Rectifier => Ok(p.map(|v| v.clamp(0.0, 1.0))),
            Activation::SmoothMax { beta, c } => Ok(p.map(|v| {
                let w = logistic(beta * (v - c));
                w * v + (1.0 - w) * c
            })),
            Activation::SoftMax => {
                let (rows, cols) = p.dims2()?;
                let mut out = p.clone();
                for j in 0..cols {
                    let m = (0..rows).map(|i| p.at2(i, j)).fold(f64::NEG_INFINITY, f64::max);
                    let total: f64 = (0..rows).map(|i| (p.at2(i, j) - m).exp()).sum();
                    for i in 0..rows {
                        out.set2(i, j, (p.at2(i, j) - m).exp() / total);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Pulls `g = ∂𝒟/∂X` back through `X = ρ(P)`.
    fn backprop(self, p: &Tensor, x: &Tensor, g: &Tensor) -> Result<Tensor> {
        match self {
            Activation::Identity => Ok(g.clone()),
            Activation::Rectifier => Ok(p.zip_map(g, |v, gv| if v > 0.0 && v < 1.0 { gv } else { 0.0 })),
            Activation::SmoothMax { beta, c } => Ok(p.zip_map(g, |v, gv| {
                let w = logistic(beta * (v - c));
                gv * (w + beta * w * (1.0 - w) * (v - c))
            })),
            Activation::SoftMax => {
                let (rows, cols) = x.dims2()?;
                let mut out = g.clone();
                for j in 0..cols {
                    let s: f64 = (0..rows).map(|i| x.at2(i, j) * g.at2(i, j)).sum();
                    for i in 0..rows {
                        out.set2(i, j, x.at2(i, j) * (g.at2(i, j) - s));
                    }
                }
                Ok(out)
            }
        }
    }
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Loss {
    /// `½‖X − Y‖²`.
    SquaredFrobenius,
    /// `Σ (X + ε) log((X + ε)/(Y + ε)) + Y − X`.
    ShiftedKl { shift: f64 },
    /// `Σ log((X + ε)/(Y + ε)) (X − Y)`.
    SymmetrisedKl { shift: f64 },
}

impl Loss {
    fn value_and_grad(self, x: &Tensor, y: &Tensor) -> Result<(f64, Tensor)> {
        x.ensure_same_shape(y, "loss arguments")?;
        match self {
            Loss::SquaredFrobenius => {
                let d = x.sub(y);
                Ok((0.5 * d.norm_sq(), d))
            }
            Loss::ShiftedKl { shift } | Loss::SymmetrisedKl { shift } => {
                let bad = x.data().iter().chain(y.data()).any(|&v| !(v + shift > 0.0));
                if bad {
                    return Err(Error::Domain(format!("KL argument not positive after shift {shift}")));
                }
                let symmetric = matches!(self, Loss::SymmetrisedKl { .. });
                let mut value = 0.0;
                let g = x.zip_map(y, |a, b| {
                    let l = ((a + shift) / (b + shift)).ln();
                    if symmetric {
                        l + (a - b) / (a + shift)
                    } else {
                        l
                    }
                });
                for (&a, &b) in x.data().iter().zip(y.data()) {
                    let l = ((a + shift) / (b + shift)).ln();
                    value += if symmetric { l * (a - b) } else { (a + shift) * l + b - a };
                }
                Ok((value, g))
            }
        }
    }
}

/// Network output for layers `A₁..A_l` applied to the columns of `d`.
pub fn nn_forward(layers: &[Tensor], d: &Tensor, activations: &[Activation]) -> Result<Tensor> {
    Ok(forward_trace(layers, d, activations)?.0.swap_remove(0))
}

/// Returns `(X_1..X_l, P_1..P_l)` with `X_j = ρ_j(P_j)`, `P_j = A_j X_{j+1}`.
fn forward_trace(layers: &[Tensor], d: &Tensor, activations: &[Activation]) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
    if layers.is_empty() || layers.len() != activations.len() {
        return Err(Error::Dimension(format!(
            "{} layers but {} activations",
            layers.len(),
            activations.len()
        )));
    }
    let l = layers.len();
    let mut xs = vec![Tensor::zeros(&[1]); l];
    let mut ps = vec![Tensor::zeros(&[1]); l];
    let mut input = d.clone();
    for j in (0..l).rev() {
        let p = matmul(&layers[j], Transpose::No, &input, Transpose::No)?;
        let x = activations[j].apply(&p)?;
        input = x.clone();
        xs[j] = x;
        ps[j] = p;
    }
    Ok((xs, ps))
}

/// Energy value and per-layer gradients.
pub fn nn_energy_grad(
    layers: &[Tensor],
    d: &Tensor,
    y: &Tensor,
    activations: &[Activation],
    loss: Loss,
    eps: f64,
) -> Result<(f64, Vec<Tensor>)> {
    let (xs, ps) = forward_trace(layers, d, activations)?;
    let (mut value, mut g) = loss.value_and_grad(&xs[0], y)?;
    let mut grads = Vec::with_capacity(layers.len());
    for j in 0..layers.len() {
        let dp = activations[j].backprop(&ps[j], &xs[j], &g)?;
        let input = if j + 1 < layers.len() { &xs[j + 1] } else { d };
        let mut ga = matmul(&dp, Transpose::No, input, Transpose::Yes)?;
        ga.axpy(eps, &layers[j]);
        value += 0.5 * eps * layers[j].norm_sq();
        if j + 1 < layers.len() {
            g = matmul(&layers[j], Transpose::Yes, &dp, Transpose::No)?;
        }
        grads.push(ga);
    }
    Ok((value, grads))
}

/// Starting weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// I.i.d. uniform entries in `[−scale, scale] / √n_j` (`n_j` = layer fan-in).
    Uniform { scale: f64 },
    /// `scale · a bᵀ` with seeded unit vectors `a ≥ 0`, `b ≥ 0`.
    RankOne { scale: f64 },
}

#[derive(Clone, Debug)]
pub struct ClassifierProblem {
    d: Tensor,
    y: Tensor,
    shapes: Vec<(usize, usize)>,
    activations: Vec<Activation>,
    loss: Loss,
    pub eps: f64,
}

impl ClassifierProblem {
    /// `hidden` lists the inner widths from the output side, so `[h]` gives
    /// `A₁: m₁ x h` and `A₂: h x s`.
    pub fn new(d: Tensor, y: Tensor, hidden: &[usize], activations: Vec<Activation>, loss: Loss, eps: f64) -> Result<Self> {
        let (s, r) = d.dims2()?;
        let (m1, r2) = y.dims2()?;
        if r != r2 {
            return Err(Error::Dimension(format!("{r} samples but {r2} label columns")));
        }
        let mut dims = vec![m1];
        dims.extend_from_slice(hidden);
        dims.push(s);
        if dims.contains(&0) {
            return Err(Error::Dimension("layer widths must be positive".into()));
        }
        let shapes: Vec<(usize, usize)> = dims.windows(2).map(|w| (w[0], w[1])).collect();
        if shapes.len() != activations.len() {
            return Err(Error::Dimension(format!(
                "{} layers but {} activations",
                shapes.len(),
                activations.len()
            )));
        }
        Ok(Self { d, y, shapes, activations, loss, eps })
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn inputs(&self) -> &Tensor {
        &self.d
    }

    pub fn labels(&self) -> &Tensor {
        &self.y
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn layer_range(&self, j: usize) -> Range<usize> {
        let start: usize = self.shapes[..j].iter().map(|(a, b)| a * b).sum();
        start..start + self.shapes[j].0 * self.shapes[j].1
    }

    pub fn dim(&self) -> usize {
        self.shapes.iter().map(|(a, b)| a * b).sum()
    }

    pub fn split(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!("expected {} unknowns, got {}", self.dim(), x.len())));
        }
        let flat = x.flatten();
        self.shapes
            .iter()
            .enumerate()
            .map(|(j, &(a, b))| flat.slice(self.layer_range(j)).into_shape(&[a, b]))
            .collect()
    }

    pub fn stack(&self, layers: &[Tensor]) -> Result<Tensor> {
        if layers.len() != self.shapes.len()
            || layers.iter().zip(&self.shapes).any(|(t, &(a, b))| t.shape() != [a, b])
        {
            return Err(Error::Dimension("layer shapes do not match the problem".into()));
        }
        Ok(Tensor::concat(&layers.iter().collect::<Vec<_>>()))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        nn_forward(&self.split(x)?, &self.d, &self.activations)
    }

    pub fn initial_point(&self, seed: u64, init: Init) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers: Vec<Tensor> = self
            .shapes
            .iter()
            .map(|&(m, n)| match init {
                Init::Uniform { scale } => {
                    let s = scale / (n as f64).sqrt();
                    Tensor::from_fn2(m, n, |_, _| rng.random_range(-s..=s))
                }
                Init::RankOne { scale } => {
                    let a: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
                    let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
                    let (na, nb) = (norm(&a), norm(&b));
                    Tensor::from_fn2(m, n, |i, j| scale * a[i] * b[j] / (na * nb))
                }
            })
            .collect();
        self.stack(&layers).expect("layers built from the problem shapes")
    }

    /// `Σ_j α_j ‖A_j‖_*`.
    pub fn regularizer(&self, alphas: &[f64]) -> Result<Separable> {
        if alphas.len() != self.shapes.len() {
            return Err(Error::Argument(format!("{} weights for {} layers", alphas.len(), self.shapes.len())));
        }
        let mut parts: Vec<(Box<dyn BregmanFunction>, Range<usize>)> = Vec::new();
        for (j, (&(m, n), &a)) in self.shapes.iter().zip(alphas).enumerate() {
            parts.push((Box::new(Nuclear::new(a, m, n)?), self.layer_range(j)));
        }
        compose_separable(parts)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE)
}

impl SmoothObjective for ClassifierProblem {
    fn value(&self, x: &Tensor) -> Result<f64> {
        Ok(self.value_and_gradient(x)?.0)
    }

    fn gradient(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.value_and_gradient(x)?.1)
    }

    fn value_and_gradient(&self, x: &Tensor) -> Result<(f64, Tensor)> {
        let layers = self.split(x)?;
        let (v, g) = nn_energy_grad(&layers, &self.d, &self.y, &self.activations, self.loss, self.eps)?;
        Ok((v, self.stack(&g)?.into_shape(x.shape())?))
    }
}
