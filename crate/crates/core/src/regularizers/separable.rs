use std::ops::Range;

use super::{check_len, check_tau, BregmanFunction, WarmStart};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Block-separable sum `R(u) = Σ_j R_j(u[range_j])` over a partition of the
/// flattened variable.
#[derive(Debug)]
pub struct Separable {
    parts: Vec<(Box<dyn BregmanFunction>, Range<usize>)>,
    len: usize,
}

/// Validates that the ranges tile `0..n` without gaps or overlap.
pub fn compose_separable(mut parts: Vec<(Box<dyn BregmanFunction>, Range<usize>)>) -> Result<Separable> {
    if parts.is_empty() {
        return Err(Error::Argument("separable sum needs at least one block".into()));
    }
    parts.sort_by_key(|(_, r)| r.start);
    let mut next = 0;
    for (_, r) in &parts {
        if r.start != next || r.end <= r.start {
            return Err(Error::Argument(format!(
                "block ranges must partition the variable; found {r:?} where {next} was expected"
            )));
        }
        next = r.end;
    }
    Ok(Separable { parts, len: next })
}

impl Separable {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&dyn BregmanFunction, &Range<usize>)> {
        self.parts.iter().map(|(f, r)| (f.as_ref(), r))
    }

    fn combine(&self, u: &Tensor, mut f: impl FnMut(usize, &dyn BregmanFunction, Tensor) -> Result<Tensor>) -> Result<Tensor> {
        check_len(u, self.len, "separable regularizer")?;
        let flat = u.flatten();
        let mut out = Vec::with_capacity(self.len);
        for (j, (r, range)) in self.parts.iter().enumerate() {
            let piece = f(j, r.as_ref(), flat.slice(range.clone()))?;
            check_len(&piece, range.len(), "separable block output")?;
            out.extend_from_slice(piece.data());
        }
        Tensor::new(u.shape(), out)
    }
}

impl BregmanFunction for Separable {
    fn value(&self, u: &Tensor) -> f64 {
        if u.len() != self.len {
            return f64::NAN;
        }
        let flat = u.flatten();
        self.parts.iter().map(|(r, range)| r.value(&flat.slice(range.clone()))).sum()
    }

    fn prox_with(&self, z: &Tensor, tau: f64, warm: &mut WarmStart) -> Result<Tensor> {
        check_tau(tau)?;
        warm.parts.resize_with(self.parts.len(), WarmStart::default);
        let mut gaps = Vec::new();
        let out = self.combine(z, |j, r, piece| {
            let w = &mut warm.parts[j];
            let res = r.prox_with(&piece, tau, w);
            gaps.extend(w.last_gap);
            res
        })?;
        warm.last_gap = gaps.into_iter().reduce(f64::max);
        Ok(out)
    }

    fn initial_subgradient(&self, u: &Tensor) -> Result<Tensor> {
        self.combine(u, |_, r, piece| r.initial_subgradient(&piece))
    }

    fn conjugate_value(&self, q: &Tensor) -> Option<f64> {
        if q.len() != self.len {
            return None;
        }
        let flat = q.flatten();
        self.parts.iter().map(|(r, range)| r.conjugate_value(&flat.slice(range.clone()))).sum()
    }
}
