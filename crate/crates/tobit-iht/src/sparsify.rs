//! The joint projection P_{s,C*}: hard thresholding on δ, lower truncation
//! on γ. γ is never subject to the sparsity budget — it is clamped, not
//! thresholded, so the scale parameter stays valid throughout the solve.

use crate::error::{Error, Result};
use crate::model::Theta;

/// Configuration of the joint projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionSpec {
    /// Sparsity budget for δ (number of coordinates retained).
    pub s: usize,
    /// Lower bound for γ, strictly positive.
    pub c_star: f64,
    /// When set, coordinate 0 (the intercept) is always retained and counts
    /// against the budget.
    pub keep_intercept: bool,
}

impl ProjectionSpec {
    pub fn new(s: usize, c_star: f64, keep_intercept: bool) -> Result<Self> {
        if !(c_star > 0.0) || !c_star.is_finite() {
            return Err(Error::invalid(format!("c_star must be positive and finite, got {c_star}")));
        }
        Ok(Self { s, c_star, keep_intercept })
    }
}

/// Total order used to pick survivors: larger |value| first, ties broken by
/// lower index. A strict total order makes the selected set unique, so any
/// selection algorithm yields the same (deterministic) result.
#[inline]
pub(crate) fn keeps_before(v: &[f64], a: usize, b: usize) -> std::cmp::Ordering {
    v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b))
}

/// Keep the `s` largest-magnitude entries of `v` (ties: lowest index wins),
/// zeroing the rest. With `keep_intercept`, entry 0 is always retained and
/// consumes one slot of the budget (an `s` of 0 still zeroes everything).
pub fn hard_threshold(v: &[f64], s: usize, keep_intercept: bool) -> Result<Vec<f64>> {
    if s > v.len() {
        return Err(Error::invalid(format!(
            "sparsity budget {s} exceeds the vector length {}",
            v.len()
        )));
    }
    let mut out = vec![0.0; v.len()];
    if s == 0 {
        return Ok(out);
    }
    if s == v.len() {
        out.copy_from_slice(v);
        return Ok(out);
    }
    let (first, budget) = if keep_intercept {
        out[0] = v[0];
        (1, s - 1)
    } else {
        (0, s)
    };
    let mut idx: Vec<usize> = (first..v.len()).collect();
    if budget > 0 && budget < idx.len() {
        idx.select_nth_unstable_by(budget - 1, |&a, &b| keeps_before(v, a, b));
    }
    for &j in idx.iter().take(budget) {
        out[j] = v[j];
    }
    Ok(out)
}

/// Lower truncation 𝒯_{C*}: max(g, c_star). Keeps γ strictly positive no
/// matter how large a gradient step was taken.
#[must_use]
pub fn truncate_gamma(g: f64, c_star: f64) -> f64 {
    g.max(c_star)
}

/// The joint projection: hard-threshold δ, truncate γ.
pub fn project(delta_raw: &[f64], gamma_raw: f64, spec: &ProjectionSpec) -> Result<Theta> {
    let delta = hard_threshold(delta_raw, spec.s, spec.keep_intercept)?;
    let gamma = truncate_gamma(gamma_raw, spec.c_star);
    Ok(Theta { delta, gamma })
}
