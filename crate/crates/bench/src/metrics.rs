//! Classifier metrics logged alongside the monitors.

use linbreg::problems::{nn_forward, Activation};
use linbreg::tensor::svd_thin;
use linbreg::{Result, Tensor};

/// Relative threshold on the singular values below which they count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Number of singular values above `tol · σ_max`; zero for the zero matrix.
pub fn rank_of(a: &Tensor, tol: f64) -> Result<usize> {
    let s = svd_thin(a)?.s;
    let top = s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > tol * top).count())
}

/// Row of the largest entry in column `j`; ties go to the lowest row.
pub fn argmax_column(t: &Tensor, j: usize) -> Result<usize> {
    let (rows, _) = t.dims2()?;
    let mut best = 0;
    for i in 1..rows {
        if t.at2(i, j) > t.at2(best, j) {
            best = i;
        }
    }
    Ok(best)
}

/// Fraction of columns where `output` and `labels` peak in the same row.
pub fn agreement_rate(output: &Tensor, labels: &Tensor) -> Result<f64> {
    output.ensure_same_shape(labels, "prediction rate")?;
    let (_, cols) = output.dims2()?;
    if cols == 0 {
        return Ok(0.0);
    }
    let mut hits = 0;
    for j in 0..cols {
        if argmax_column(output, j)? == argmax_column(labels, j)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / cols as f64)
}

/// Training-set prediction rate of the network `A₁..A_l` on inputs `d`.
pub fn prediction_rate(layers: &[Tensor], d: &Tensor, y: &Tensor, activations: &[Activation]) -> Result<f64> {
    agreement_rate(&nn_forward(layers, d, activations)?, y)
}
