//! The left-censored (Tobit) data model and its reparameterized
//! negative log-likelihood with exact first and second derivatives.
//!
//! Observations follow `y = max(y*, c0)` with latent `y* = x'β + ε`,
//! `ε ~ N(0, σ²)`, and `x = (1, x₁, …, x_d)'`. Estimation works in the
//! Olsen parameterization θ = (δ, γ) with δ = β/σ and γ = 1/σ, under which
//! the average negative log-likelihood
//!
//! ```text
//! L(θ) = (1/n) Σᵢ { dᵢ[−log γ + ½(γyᵢ − xᵢ'δ)²] − (1−dᵢ) log Φ(−xᵢ'δ) }
//! ```
//!
//! (dᵢ = 1 for uncensored rows, y internally shifted so the threshold is 0)
//! is convex with a positive-semidefinite Hessian.
//!
//! All row reductions run in a canonical content order with a fixed pairwise
//! tree, so objective and derivative values are invariant — bit for bit —
//! under any permutation of the input rows.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduce::{pairwise_sum, pairwise_sum_vec};
use crate::special::{log_phi_cdf, mills_g, mills_h, normal_cdf, normal_pdf};

/// Working parameter of the Olsen parameterization: δ = β/σ (length d+1,
/// intercept first) and γ = 1/σ > 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub delta: Vec<f64>,
    pub gamma: f64,
}

impl Theta {
    /// Validating constructor: all entries finite, γ > 0.
    pub fn new(delta: Vec<f64>, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!("gamma must be positive and finite, got {gamma}")));
        }
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("delta contains a non-finite entry"));
        }
        Ok(Self { delta, gamma })
    }

    /// Number of δ coordinates (d + 1).
    #[must_use]
    pub fn dim(&self) -> usize {
        self.delta.len()
    }

    /// Indices of the nonzero δ coordinates, ascending.
    #[must_use]
    pub fn support(&self) -> Vec<usize> {
        self.delta
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    /// Number of nonzero δ coordinates.
    #[must_use]
    pub fn nnz(&self) -> usize {
        self.delta.iter().filter(|v| **v != 0.0).count()
    }

    /// Euclidean distance ‖θ − θ'‖₂ over the stacked (δ, γ) vector.
    #[must_use]
    pub fn l2_distance(&self, other: &Theta) -> f64 {
        debug_assert_eq!(self.delta.len(), other.delta.len());
        let mut acc = 0.0;
        for (a, b) in self.delta.iter().zip(&other.delta) {
            let t = a - b;
            acc += t * t;
        }
        let t = self.gamma - other.gamma;
        (acc + t * t).sqrt()
    }
}

/// Natural Tobit parameters: β (length d+1, intercept first) and σ > 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: Vec<f64>,
    pub sigma: f64,
}

/// θ = (δ, γ) → (β, σ) with β = δ/γ, σ = 1/γ.
pub fn theta_to_params(theta: &Theta) -> Result<ModelParams> {
    if !(theta.gamma > 0.0) || !theta.gamma.is_finite() {
        return Err(Error::invalid(format!("gamma must be positive and finite, got {}", theta.gamma)));
    }
    Ok(ModelParams {
        beta: theta.delta.iter().map(|d| d / theta.gamma).collect(),
        sigma: 1.0 / theta.gamma,
    })
}

/// (β, σ) → θ = (δ, γ) with δ = β/σ, γ = 1/σ.
pub fn params_to_theta(params: &ModelParams) -> Result<Theta> {
    if !(params.sigma > 0.0) || !params.sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be positive and finite, got {}", params.sigma)));
    }
    Ok(Theta {
        delta: params.beta.iter().map(|b| b / params.sigma).collect(),
        gamma: 1.0 / params.sigma,
    })
}

/// An immutable left-censored dataset.
///
/// Rows are stored in a canonical content order (sorted by shifted response,
/// censoring flag, then covariates), fixed once at construction. Combined
/// with the fixed pairwise reduction tree this makes every likelihood
/// quantity exactly invariant under permutations of the ingested rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoredDataset {
    n: usize,
    /// Columns per row: d + 1, intercept first.
    p: usize,
    /// Row-major n × p design matrix, canonical row order, column 0 all ones.
    x: Vec<f64>,
    /// Shifted responses y − c0 (≥ 0; exactly 0 on censored rows).
    y_shift: Vec<f64>,
    /// Observed responses as ingested (y ≥ c0), for lossless serialization.
    y_obs: Vec<f64>,
    censored: Vec<bool>,
    c0: f64,
}

impl CensoredDataset {
    /// Build a dataset from an augmented design matrix (row-major, `p`
    /// columns per row **including** the leading intercept column of ones),
    /// observed responses, and the censoring threshold `c0`.
    pub fn from_parts(x: Vec<f64>, p: usize, y_obs: Vec<f64>, c0: f64) -> Result<Self> {
        let n = y_obs.len();
        if n == 0 {
            return Err(Error::data("dataset must contain at least one row"));
        }
        if p == 0 {
            return Err(Error::Schema("design matrix needs at least the intercept column".into()));
        }
        if x.len() != n * p {
            return Err(Error::data(format!(
                "design matrix has {} entries, expected {} ({} rows x {} columns)",
                x.len(),
                n * p,
                n,
                p
            )));
        }
        if !c0.is_finite() {
            return Err(Error::data(format!("censoring threshold must be finite, got {c0}")));
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite covariate at row {}, column {}", k / p, k % p)));
        }
        for (i, &yi) in y_obs.iter().enumerate() {
            if !yi.is_finite() {
                return Err(Error::data(format!("non-finite response at row {i}")));
            }
            if yi < c0 {
                return Err(Error::data(format!(
                    "response {yi} at row {i} lies below the censoring threshold {c0}"
                )));
            }
        }
        if let Some(i) = (0..n).find(|i| x[i * p] != 1.0) {
            return Err(Error::Schema(format!(
                "column 0 must be the all-ones intercept; row {i} has {}",
                x[i * p]
            )));
        }
        let y_shift: Vec<f64> = y_obs.iter().map(|yi| yi - c0).collect();
        let censored: Vec<bool> = y_shift.iter().map(|&s| s == 0.0).collect();
        Ok(Self::canonicalize(n, p, x, y_shift, y_obs, censored, c0))
    }

    /// Convenience: `x_raw` has `d` covariate columns, intercept prepended here.
    pub fn from_covariates(x_raw: &[f64], d: usize, y_obs: Vec<f64>, c0: f64) -> Result<Self> {
        let n = y_obs.len();
        if d > 0 && x_raw.len() != n * d {
            return Err(Error::data(format!(
                "covariate matrix has {} entries, expected {} ({} rows x {} columns)",
                x_raw.len(),
                n * d,
                n,
                d
            )));
        }
        let p = d + 1;
        let mut x = Vec::with_capacity(n * p);
        for i in 0..n {
            x.push(1.0);
            x.extend_from_slice(&x_raw[i * d..(i + 1) * d]);
        }
        Self::from_parts(x, p, y_obs, c0)
    }

    fn canonicalize(
        n: usize,
        p: usize,
        x: Vec<f64>,
        y_shift: Vec<f64>,
        y_obs: Vec<f64>,
        censored: Vec<bool>,
        c0: f64,
    ) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            y_shift[a]
                .total_cmp(&y_shift[b])
                .then(censored[a].cmp(&censored[b]))
                .then_with(|| cmp_rows(&x[a * p..(a + 1) * p], &x[b * p..(b + 1) * p]))
        });
        let mut xs = Vec::with_capacity(n * p);
        let mut ys = Vec::with_capacity(n);
        let mut yo = Vec::with_capacity(n);
        let mut cs = Vec::with_capacity(n);
        for &i in &order {
            xs.extend_from_slice(&x[i * p..(i + 1) * p]);
            ys.push(y_shift[i]);
            yo.push(y_obs[i]);
            cs.push(censored[i]);
        }
        Self { n, p, x: xs, y_shift: ys, y_obs: yo, censored: cs, c0 }
    }

    /// Number of rows.
    #[must_use]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of design columns including the intercept (d + 1).
    #[must_use]
    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of covariates d (excluding the intercept).
    #[must_use]
    pub fn d(&self) -> usize {
        self.p - 1
    }

    /// Censoring threshold.
    #[must_use]
    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// Design row `i` (length p, leading 1), canonical order.
    #[must_use]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    /// Shifted response y − c0 for row `i`.
    #[must_use]
    pub fn y_shifted(&self, i: usize) -> f64 {
        self.y_shift[i]
    }

    /// Observed (unshifted) response for row `i`.
    #[must_use]
    pub fn y_observed(&self, i: usize) -> f64 {
        self.y_obs[i]
    }

    /// Whether row `i` is censored (y == c0).
    #[must_use]
    pub fn is_censored(&self, i: usize) -> bool {
        self.censored[i]
    }

    /// Number of uncensored rows.
    #[must_use]
    pub fn uncensored_count(&self) -> usize {
        self.censored.iter().filter(|c| !**c).count()
    }

    /// Fraction of censored rows.
    #[must_use]
    pub fn censoring_rate(&self) -> f64 {
        self.censored.iter().filter(|c| **c).count() as f64 / self.n as f64
    }

    /// Full invariant check plus identifiability: at least one uncensored
    /// row must be present, otherwise γ drops out of the likelihood.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::data("dataset must contain at least one row"));
        }
        if self.x.len() != self.n * self.p || self.y_shift.len() != self.n || self.censored.len() != self.n {
            return Err(Error::data("internal dimension mismatch"));
        }
        if self.x.iter().any(|v| !v.is_finite()) || self.y_shift.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("non-finite entry in dataset"));
        }
        if (0..self.n).any(|i| self.x[i * self.p] != 1.0) {
            return Err(Error::Schema("column 0 must be the all-ones intercept".into()));
        }
        for i in 0..self.n {
            if self.y_shift[i] < 0.0 {
                return Err(Error::data(format!("row {i}: response below the censoring threshold")));
            }
            if self.censored[i] != (self.y_shift[i] == 0.0) {
                return Err(Error::data(format!("row {i}: censoring flag inconsistent with response")));
            }
        }
        if self.uncensored_count() == 0 {
            return Err(Error::GammaUnidentifiable);
        }
        Ok(())
    }

    /// New dataset containing the given rows (indices into canonical order).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::data("subset must contain at least one row"));
        }
        let mut x = Vec::with_capacity(rows.len() * self.p);
        let mut ys = Vec::with_capacity(rows.len());
        let mut yo = Vec::with_capacity(rows.len());
        let mut cs = Vec::with_capacity(rows.len());
        for &i in rows {
            if i >= self.n {
                return Err(Error::invalid(format!("row index {i} out of range for n={}", self.n)));
            }
            x.extend_from_slice(self.row(i));
            ys.push(self.y_shift[i]);
            yo.push(self.y_obs[i]);
            cs.push(self.censored[i]);
        }
        Ok(Self::canonicalize(rows.len(), self.p, x, ys, yo, cs, self.c0))
    }

    /// Inner product xᵢ'δ; when `support` is given it must cover every
    /// nonzero of δ, and only those coordinates are touched.
    #[inline]
    pub(crate) fn xdot(&self, i: usize, delta: &[f64], support: Option<&[usize]>) -> f64 {
        let row = self.row(i);
        match support {
            None => row.iter().zip(delta).map(|(x, d)| x * d).sum(),
            Some(s) => s.iter().map(|&j| row[j] * delta[j]).sum(),
        }
    }
}

fn cmp_rows(a: &[f64], b: &[f64]) -> Ordering {
    for (u, v) in a.iter().zip(b) {
        match u.total_cmp(v) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

fn check_eval_inputs(theta: &Theta, data: &CensoredDataset) -> Result<()> {
    if !(theta.gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {}", theta.gamma)));
    }
    if theta.delta.len() != data.p() {
        return Err(Error::invalid(format!(
            "delta has {} coordinates but the dataset has {} design columns",
            theta.delta.len(),
            data.p()
        )));
    }
    Ok(())
}

#[cfg(debug_assertions)]
fn debug_check_support(delta: &[f64], support: Option<&[usize]>) {
    if let Some(s) = support {
        for (j, v) in delta.iter().enumerate() {
            if *v != 0.0 {
                debug_assert!(s.contains(&j), "support is missing nonzero coordinate {j}");
            }
        }
    }
}

#[cfg(not(debug_assertions))]
fn debug_check_support(_delta: &[f64], _support: Option<&[usize]>) {}

/// Average negative log-likelihood L(θ).
///
/// Finite for every finite θ with γ > 0; a non-finite return (possible when
/// ‖δ‖ has blown up enough to overflow xᵢ'δ) signals solver divergence to
/// the caller rather than erroring here.
pub fn nll(theta: &Theta, data: &CensoredDataset) -> Result<f64> {
    nll_impl(theta, data, None)
}

/// [`nll`] with the inner products restricted to `support` (which must
/// contain every nonzero coordinate of δ). Bit-identical to the dense path.
pub fn nll_on_support(theta: &Theta, data: &CensoredDataset, support: &[usize]) -> Result<f64> {
    nll_impl(theta, data, Some(support))
}

fn nll_impl(theta: &Theta, data: &CensoredDataset, support: Option<&[usize]>) -> Result<f64> {
    check_eval_inputs(theta, data)?;
    debug_check_support(&theta.delta, support);
    let gamma = theta.gamma;
    let ln_gamma = gamma.ln();
    let total = pairwise_sum(data.n(), &mut |i| {
        let a = data.xdot(i, &theta.delta, support);
        if data.is_censored(i) {
            -log_phi_cdf(-a)
        } else {
            let r = gamma * data.y_shifted(i) - a;
            0.5 * r * r - ln_gamma
        }
    });
    Ok(total / data.n() as f64)
}

/// Gradient ∇L(θ) as a vector of length d+2, γ component last.
pub fn gradient(theta: &Theta, data: &CensoredDataset) -> Result<Vec<f64>> {
    gradient_impl(theta, data, None)
}

/// [`gradient`] with support-restricted inner products (see [`nll_on_support`]).
pub fn gradient_on_support(
    theta: &Theta,
    data: &CensoredDataset,
    support: &[usize],
) -> Result<Vec<f64>> {
    gradient_impl(theta, data, Some(support))
}

fn gradient_impl(
    theta: &Theta,
    data: &CensoredDataset,
    support: Option<&[usize]>,
) -> Result<Vec<f64>> {
    check_eval_inputs(theta, data)?;
    debug_check_support(&theta.delta, support);
    let p = data.p();
    let gamma = theta.gamma;
    let inv_gamma = 1.0 / gamma;
    let mut grad = pairwise_sum_vec(data.n(), p + 1, &mut |i, buf| {
        let a = data.xdot(i, &theta.delta, support);
        let row = data.row(i);
        if data.is_censored(i) {
            let c = mills_g(-a);
            for (b, &xv) in buf[..p].iter_mut().zip(row) {
                *b += c * xv;
            }
        } else {
            let y = data.y_shifted(i);
            let r = gamma * y - a;
            for (b, &xv) in buf[..p].iter_mut().zip(row) {
                *b -= r * xv;
            }
            buf[p] += y * r - inv_gamma;
        }
    });
    let inv_n = 1.0 / data.n() as f64;
    for g in &mut grad {
        *g *= inv_n;
    }
    Ok(grad)
}

/// Which coordinates of θ a Hessian should cover. Coordinates 0..=d index
/// δ; coordinate d+1 is γ.
#[derive(Debug, Clone, Copy)]
pub enum HessianScope<'a> {
    /// All d+2 coordinates.
    Dense,
    /// A strictly increasing list of θ coordinate indices.
    Coords(&'a [usize]),
}

/// Empirical Hessian of L restricted to the requested coordinates.
///
/// Symmetric by construction and positive semidefinite (the reparameterized
/// likelihood is convex): uncensored rows contribute rank-one terms plus a
/// γ⁻² diagonal, censored rows contribute h(−xᵢ'δ)·xᵢxᵢ' with h ∈ (0, 1).
pub fn hessian(theta: &Theta, data: &CensoredDataset, scope: HessianScope<'_>) -> Result<DMatrix<f64>> {
    check_eval_inputs(theta, data)?;
    let p = data.p();
    let idx: Vec<usize> = match scope {
        HessianScope::Dense => (0..=p).collect(),
        HessianScope::Coords(c) => {
            if c.is_empty() {
                return Err(Error::invalid("hessian scope must name at least one coordinate"));
            }
            if c.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid("hessian coordinates must be strictly increasing"));
            }
            if *c.last().unwrap() > p {
                return Err(Error::invalid(format!(
                    "hessian coordinate {} out of range (max {})",
                    c.last().unwrap(),
                    p
                )));
            }
            c.to_vec()
        }
    };
    let k = idx.len();

    // The xᵢ'δ dots dominate when the scope is small; route them through
    // the support of δ when it is sparse enough to pay off.
    let nnz = theta.delta.iter().filter(|v| **v != 0.0).count();
    let supp: Option<Vec<usize>> = if nnz * 4 <= p {
        Some(theta.support())
    } else {
        None
    };

    let gamma = theta.gamma;
    let inv_g2 = 1.0 / (gamma * gamma);
    let flat = pairwise_sum_vec(data.n(), k * k, &mut |i, buf| {
        let row = data.row(i);
        if data.is_censored(i) {
            let a = data.xdot(i, &theta.delta, supp.as_deref());
            let w = mills_h(-a);
            for (r, &jr) in idx.iter().enumerate() {
                if jr == p {
                    continue;
                }
                let xr = w * row[jr];
                for (c, &jc) in idx.iter().enumerate().skip(r) {
                    if jc == p {
                        continue;
                    }
                    buf[r * k + c] += xr * row[jc];
                }
            }
        } else {
            let y = data.y_shifted(i);
            for (r, &jr) in idx.iter().enumerate() {
                for (c, &jc) in idx.iter().enumerate().skip(r) {
                    buf[r * k + c] += match (jr == p, jc == p) {
                        (false, false) => row[jr] * row[jc],
                        (false, true) => -y * row[jr],
                        (true, true) => y * y + inv_g2,
                        (true, false) => unreachable!("indices ascend"),
                    };
                }
            }
        }
    });
    let inv_n = 1.0 / data.n() as f64;
    let mut m = DMatrix::<f64>::zeros(k, k);
    for r in 0..k {
        for c in r..k {
            let v = flat[r * k + c] * inv_n;
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
    Ok(m)
}

/// Conditional means for a design row: the latent mean x'β and the mean of
/// the censored response E[max(y*, c0)] = c0·Φ(−a) + x'β·Φ(a) + σ·φ(a)
/// with a = (x'β − c0)/σ.
pub fn predict(theta: &Theta, x_row: &[f64], c0: f64) -> Result<(f64, f64)> {
    if !(theta.gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {}", theta.gamma)));
    }
    if x_row.len() != theta.delta.len() {
        return Err(Error::invalid(format!(
            "design row has {} entries, expected {}",
            x_row.len(),
            theta.delta.len()
        )));
    }
    if x_row.first() != Some(&1.0) {
        return Err(Error::invalid("design row must start with the intercept 1"));
    }
    let dot: f64 = x_row.iter().zip(&theta.delta).map(|(x, d)| x * d).sum();
    let latent_mean = dot / theta.gamma;
    let sigma = 1.0 / theta.gamma;
    let a = (latent_mean - c0) * theta.gamma;
    let censored_mean = c0 * normal_cdf(-a) + latent_mean * normal_cdf(a) + sigma * normal_pdf(a);
    Ok((latent_mean, censored_mean))
}
