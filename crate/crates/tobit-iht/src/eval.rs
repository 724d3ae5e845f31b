//! Metrics, cross-validation over sparsity, and experiment harnesses.
//!
//! Everything here is deterministic given the seeds embedded in the inputs:
//! replication seeds derive from the base seed via [`crate::datagen::derive_seed`],
//! fold assignment uses a seeded permutation, and reductions happen in fixed
//! (seed, fold) order.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::datagen::{derive_seed, generate, generate_sharded, GenSpec, ShardPlan};
use crate::dist::{fit_distributed, CommLog, DistConfig};
use crate::error::{Error, Result};
use crate::model::{nll, params_to_theta, theta_to_params, CensoredDataset, ModelParams, Theta};
use crate::solver::{fit, IhtConfig, Init, TraceRecord};

/// Estimation-quality summary for one fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// ‖θ̂ − θ*‖₂ in the working parameterization (γ included).
    pub l2_theta: f64,
    /// ‖β̂ − β*‖₂ on the natural scale (intercept included).
    pub l2_beta: f64,
    /// Support metrics over slope coordinates 1..=d (intercept excluded),
    /// with "nonzero" meaning exactly nonzero.
    pub support_tpr: f64,
    pub support_fpr: f64,
    pub support_f1: f64,
    /// Mean held-out negative log-likelihood, when a holdout set was given.
    pub predictive_nll: Option<f64>,
    /// Censoring rate of the holdout set, when given.
    pub censoring_rate: Option<f64>,
}

/// One point of an error-versus-sample-size curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub median_l2: f64,
    pub iqr_l2: f64,
    pub replications: usize,
}

/// Median ℓ₂ estimation error as the per-point sample size grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub points: Vec<RatePoint>,
}

/// One row of the cross-validation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub s: usize,
    pub mean_cv_nll: f64,
    pub se: f64,
}

/// Per-iteration distance to a reference iterate, with the contraction
/// ratio e_{t+1}/e_t (omitted below the error floor and at the last row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagRow {
    pub t: usize,
    pub error_to_ref: f64,
    pub ratio: Option<f64>,
}

/// Side-by-side summary of distributed versus pooled estimation error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistVsPooled {
    pub machines: usize,
    pub rounds: usize,
    pub replications: usize,
    pub median_dist_l2: f64,
    pub median_pooled_l2: f64,
    /// median_dist_l2 / median_pooled_l2.
    pub ratio: f64,
    pub comm: CommLog,
    /// Per-replication (distributed, pooled) ℓ₂ errors, in replication order.
    pub per_rep: Vec<(f64, f64)>,
}

/// Compare a fitted θ̂ against the ground truth, optionally scoring a
/// held-out sample with the model's own likelihood.
pub fn compute_metrics(
    theta_hat: &Theta,
    truth: &ModelParams,
    holdout: Option<&CensoredDataset>,
) -> Result<Metrics> {
    if theta_hat.delta.len() != truth.beta.len() {
        return Err(Error::invalid(format!(
            "estimate has {} coefficients, truth has {}",
            theta_hat.delta.len(),
            truth.beta.len()
        )));
    }
    let theta_star = params_to_theta(truth)?;
    let beta_hat = theta_to_params(theta_hat)?.beta;

    let l2_theta = theta_hat.l2_distance(&theta_star);
    let l2_beta = beta_hat
        .iter()
        .zip(&truth.beta)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();

    let d = truth.beta.len() - 1;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fntv = 0usize;
    let mut true_pos_total = 0usize;
    for j in 1..=d {
        let hat_on = theta_hat.delta[j] != 0.0;
        let star_on = truth.beta[j] != 0.0;
        true_pos_total += usize::from(star_on);
        match (hat_on, star_on) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fntv += 1,
            (false, false) => {}
        }
    }
    let support_tpr = if true_pos_total == 0 { 1.0 } else { tp as f64 / true_pos_total as f64 };
    let negatives = d - true_pos_total;
    let support_fpr = if negatives == 0 { 0.0 } else { fp as f64 / negatives as f64 };
    let support_f1 = if 2 * tp + fp + fntv == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fntv) as f64
    };

    let (predictive_nll, censoring_rate) = match holdout {
        Some(h) => {
            if h.p() != theta_hat.delta.len() {
                return Err(Error::invalid(format!(
                    "holdout has {} design columns, estimate has {}",
                    h.p(),
                    theta_hat.delta.len()
                )));
            }
            (Some(nll(theta_hat, h)?), Some(h.censoring_rate()))
        }
        None => (None, None),
    };

    Ok(Metrics {
        l2_theta,
        l2_beta,
        support_tpr,
        support_fpr,
        support_f1,
        predictive_nll,
        censoring_rate,
    })
}

/// Seeded Fisher–Yates shuffle of 0..n (modulo draw; deterministic given seed).
fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Interpolated quantile of pre-sorted values (type-7: pos = q·(m−1)).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let m = sorted.len();
    debug_assert!(m >= 1);
    let pos = q * (m - 1) as f64;
    let lo = pos.floor() as usize;
    if lo + 1 >= m {
        return sorted[m - 1];
    }
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    quantile_sorted(values, 0.5)
}

/// K-fold cross-validation over the sparsity grid. Folds come from a seeded
/// permutation (row `perm[i]` lands in fold `i mod K`); each candidate s is
/// scored by the mean held-out negative log-likelihood of the fold fits, and
/// ties break toward smaller s. The returned table is sorted by s ascending.
pub fn cross_validate_s(
    data: &CensoredDataset,
    s_grid: &[usize],
    folds: usize,
    base: &IhtConfig,
    seed: u64,
) -> Result<(usize, Vec<CvRow>)> {
    if s_grid.is_empty() {
        return Err(Error::invalid("sparsity grid must be nonempty"));
    }
    if folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    if data.n() < folds {
        return Err(Error::invalid(format!(
            "cannot split {} rows into {folds} folds",
            data.n()
        )));
    }
    data.validate()?;

    let perm = seeded_permutation(data.n(), seed);
    let mut fold_of = vec![0usize; data.n()];
    for (i, &row) in perm.iter().enumerate() {
        fold_of[row] = i % folds;
    }
    let mut splits = Vec::with_capacity(folds);
    for f in 0..folds {
        let train: Vec<usize> = (0..data.n()).filter(|&r| fold_of[r] != f).collect();
        let test: Vec<usize> = (0..data.n()).filter(|&r| fold_of[r] == f).collect();
        let train_set = data.subset(&train)?;
        if let Err(e) = train_set.validate() {
            return match e {
                Error::GammaUnidentifiable => Err(Error::FoldDegenerate { fold: f }),
                other => Err(other),
            };
        }
        let test_set = data.subset(&test)?;
        splits.push((train_set, test_set));
    }

    let mut grid: Vec<usize> = s_grid.to_vec();
    grid.sort_unstable();
    let mut table = Vec::with_capacity(grid.len());
    for &s in &grid {
        let mut scores = Vec::with_capacity(folds);
        for (train_set, test_set) in &splits {
            let mut cfg = base.clone();
            cfg.s = s;
            let fitted = fit(train_set, &cfg)?;
            scores.push(nll(&fitted.theta, test_set)?);
        }
        let k = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / k;
        let var = scores.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0);
        table.push(CvRow { s, mean_cv_nll: mean, se: (var / k).sqrt() });
    }

    let mut best = &table[0];
    for row in &table[1..] {
        if row.mean_cv_nll < best.mean_cv_nll {
            best = row;
        }
    }
    Ok((best.s, table))
}

/// Median estimation error across seeded replications for each sample size.
/// Replication (g, r) uses seed `derive_seed(base, g·reps + r)`.
pub fn rate_experiment(
    base_spec: &GenSpec,
    n_grid: &[usize],
    reps: usize,
    config: &IhtConfig,
) -> Result<RateCurve> {
    if n_grid.is_empty() {
        return Err(Error::invalid("sample-size grid must be nonempty"));
    }
    if !n_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid("sample-size grid must be strictly increasing"));
    }
    if reps == 0 {
        return Err(Error::invalid("at least one replication is required"));
    }
    let mut points = Vec::with_capacity(n_grid.len());
    for (gi, &n) in n_grid.iter().enumerate() {
        let mut errs = Vec::with_capacity(reps);
        for r in 0..reps {
            let spec = GenSpec {
                n,
                seed: derive_seed(base_spec.seed, (gi * reps + r) as u64),
                shards: ShardPlan::Single,
                ..base_spec.clone()
            };
            let (data, truth) = generate(&spec)?;
            let fitted = fit(&data, config)?;
            errs.push(compute_metrics(&fitted.theta, &truth, None)?.l2_theta);
        }
        errs.sort_by(f64::total_cmp);
        points.push(RatePoint {
            n,
            median_l2: quantile_sorted(&errs, 0.5),
            iqr_l2: quantile_sorted(&errs, 0.75) - quantile_sorted(&errs, 0.25),
            replications: reps,
        });
    }
    Ok(RateCurve { points })
}

/// Distance of every traced iterate to a reference point, with contraction
/// ratios. Requires the trace to carry per-iteration thetas
/// (`IhtConfig::trace_thetas`); the ratio is reported only while
/// e_t ≥ 10·tol (and never at the final row).
pub fn convergence_diagnostics(
    trace: &[TraceRecord],
    theta_ref: &Theta,
    tol: f64,
) -> Result<Vec<DiagRow>> {
    if trace.is_empty() {
        return Err(Error::invalid("trace is empty"));
    }
    let mut errs = Vec::with_capacity(trace.len());
    for rec in trace {
        let th = rec.theta.as_ref().ok_or(Error::DiagnosticsUnavailable)?;
        if th.delta.len() != theta_ref.delta.len() {
            return Err(Error::invalid("trace and reference dimensions differ"));
        }
        errs.push(th.l2_distance(theta_ref));
    }
    let floor = 10.0 * tol;
    Ok((0..trace.len())
        .map(|t| {
            let e = errs[t];
            let ratio = if t + 1 < trace.len() && e >= floor && e > 0.0 {
                Some(errs[t + 1] / e)
            } else {
                None
            };
            DiagRow { t: trace[t].iter, error_to_ref: e, ratio }
        })
        .collect())
}

/// Replicated comparison of the distributed fit against the pooled fit on
/// identical draws (generation is shard-plan-independent, so each
/// replication's pooled data is exactly the union of its shards).
pub fn dist_vs_pooled(
    spec: &GenSpec,
    outer_rounds: usize,
    reps: usize,
    inner: &IhtConfig,
) -> Result<DistVsPooled> {
    if reps == 0 {
        return Err(Error::invalid("at least one replication is required"));
    }
    let machines = spec.shard_sizes()?.len();
    let mut dist_errs = Vec::with_capacity(reps);
    let mut pooled_errs = Vec::with_capacity(reps);
    let mut comm = None;
    for r in 0..reps {
        let seed = derive_seed(spec.seed, r as u64);
        let sharded_spec = GenSpec { seed, ..spec.clone() };
        let (shards, truth) = generate_sharded(&sharded_spec)?;
        let cfg = DistConfig {
            inner: inner.clone(),
            outer_rounds,
            init: Init::Cold,
        };
        let (dist_fit, log) = fit_distributed(&shards, &cfg)?;
        dist_errs.push(compute_metrics(&dist_fit.theta, &truth, None)?.l2_theta);
        comm = Some(log);

        let pooled_spec = GenSpec { shards: ShardPlan::Single, ..sharded_spec };
        let (pooled, truth_pooled) = generate(&pooled_spec)?;
        let fitted = fit(&pooled, inner)?;
        pooled_errs.push(compute_metrics(&fitted.theta, &truth_pooled, None)?.l2_theta);
    }
    let per_rep: Vec<(f64, f64)> =
        dist_errs.iter().copied().zip(pooled_errs.iter().copied()).collect();
    let median_dist_l2 = median(&mut dist_errs);
    let median_pooled_l2 = median(&mut pooled_errs);
    let ratio = if median_pooled_l2 == 0.0 {
        if median_dist_l2 == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        median_dist_l2 / median_pooled_l2
    };
    Ok(DistVsPooled {
        machines,
        rounds: outer_rounds,
        replications: reps,
        median_dist_l2,
        median_pooled_l2,
        ratio,
        comm: comm.expect("reps >= 1"),
        per_rep,
    })
}
