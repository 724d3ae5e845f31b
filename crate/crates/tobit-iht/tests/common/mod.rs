//! Shared helpers for the integration tests: deterministic random instances
//! and central finite differences of the likelihood.

#![allow(dead_code)]

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use tobit_iht::datagen::{generate, BetaSpec, GenSpec};
use tobit_iht::model::{gradient, nll, CensoredDataset, Theta};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw on [0, 1).
pub fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(rng)
}

/// A dense random parameter point with γ in the given range.
pub fn random_theta(rng: &mut ChaCha8Rng, p: usize, gamma_lo: f64, gamma_hi: f64) -> Theta {
    let delta: Vec<f64> = (0..p).map(|_| uniform(rng, -1.2, 1.2)).collect();
    Theta { delta, gamma: uniform(rng, gamma_lo, gamma_hi) }
}

/// A small seeded dataset with both censored and uncensored rows whenever the
/// intercept choice allows it. Retries nearby seeds until validation passes
/// (i.e. at least one uncensored row).
pub fn random_instance(seed: u64, n: usize, d: usize, beta0: f64, sigma: f64) -> CensoredDataset {
    for attempt in 0..20 {
        let spec = GenSpec {
            beta0,
            sigma_star: sigma,
            beta_nonzero: BetaSpec::Default,
            ..GenSpec::new(n, d, d.min(2), seed.wrapping_add(attempt * 7919))
        };
        let (data, _) = generate(&spec).expect("valid spec");
        if data.validate().is_ok() {
            return data;
        }
    }
    panic!("could not draw a dataset with an uncensored row");
}

/// Central finite difference of the objective: one value per coordinate of
/// (δ, γ).
pub fn fd_gradient(theta: &Theta, data: &CensoredDataset) -> Vec<f64> {
    let p = theta.delta.len();
    let mut out = Vec::with_capacity(p + 1);
    for j in 0..=p {
        let base = if j < p { theta.delta[j] } else { theta.gamma };
        let h = 5e-6 * base.abs().max(1.0);
        let eval = |v: f64| -> f64 {
            let mut t = theta.clone();
            if j < p {
                t.delta[j] = v;
            } else {
                t.gamma = v;
            }
            nll(&t, data).expect("nll at perturbed point")
        };
        out.push((eval(base + h) - eval(base - h)) / (2.0 * h));
    }
    out
}

/// Central finite difference of the gradient: row j is ∂(∇L)/∂θ_j.
pub fn fd_hessian(theta: &Theta, data: &CensoredDataset) -> Vec<Vec<f64>> {
    let p = theta.delta.len();
    let mut rows = Vec::with_capacity(p + 1);
    for j in 0..=p {
        let base = if j < p { theta.delta[j] } else { theta.gamma };
        let h = 1e-5 * base.abs().max(1.0);
        let eval = |v: f64| -> Vec<f64> {
            let mut t = theta.clone();
            if j < p {
                t.delta[j] = v;
            } else {
                t.gamma = v;
            }
            gradient(&t, data).expect("gradient at perturbed point")
        };
        let plus = eval(base + h);
        let minus = eval(base - h);
        rows.push(
            plus.iter()
                .zip(&minus)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect(),
        );
    }
    rows
}

/// Median of a small sample (sorts a copy; averages the middle pair).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}
