//! Centralized iterative hard thresholding for the censored-regression
//! likelihood: θ^{t+1} = P_{s,C*}(θ^t − η ∇L(θ^t)).
//!
//! The update is plain projected gradient descent; the Hessian is used only
//! to estimate a step size. With `eta = auto`, the step is refreshed every
//! iteration from the extreme eigenvalues of the Hessian restricted to the
//! coordinates that currently matter, evaluated at the γ-profiled companion
//! of the iterate (the γ minimizing the objective for the current δ). At a
//! cold start γ = C* the raw γ-curvature is enormous (it contains γ⁻²) and
//! would force a uselessly small step; profiling γ first puts the curvature
//! estimate at the scale the iterates are heading toward.

use std::fmt;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    gradient_on_support, hessian, nll_on_support, CensoredDataset, HessianScope, Theta,
};
use crate::reduce::pairwise_sum_vec;
use crate::sparsify::{keeps_before, ProjectionSpec};

/// Step-size policy: a fixed positive value, or per-iteration estimation
/// from the restricted Hessian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Auto,
    Fixed(f64),
}

impl Serialize for StepSize {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StepSize::Auto => serializer.serialize_str("auto"),
            StepSize::Fixed(v) => serializer.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for StepSize {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = StepSize;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"auto\" or a positive number")
            }
            fn visit_str<E: de::Error>(self, s: &str) -> std::result::Result<StepSize, E> {
                if s.eq_ignore_ascii_case("auto") {
                    Ok(StepSize::Auto)
                } else {
                    s.parse::<f64>().map(StepSize::Fixed).map_err(|_| {
                        E::invalid_value(de::Unexpected::Str(s), &"\"auto\" or a number")
                    })
                }
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<StepSize, E> {
                Ok(StepSize::Fixed(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<StepSize, E> {
                Ok(StepSize::Fixed(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<StepSize, E> {
                Ok(StepSize::Fixed(v as f64))
            }
        }
        deserializer.deserialize_any(V)
    }
}

/// Initial iterate: the all-zero cold start (δ = 0, γ = C*) or a supplied
/// warm start (e.g. an externally computed penalized estimate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Cold,
    Warm(Theta),
}

/// Solver configuration for a centralized fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IhtConfig {
    /// Sparsity budget for δ.
    pub s: usize,
    /// Lower bound C* for γ.
    pub c_star: f64,
    /// Step-size policy.
    pub eta: StepSize,
    /// Iteration cap T.
    pub max_iters: usize,
    /// Early-stopping tolerance on ‖θ^{t+1} − θ^t‖₂ (0 disables early stop).
    pub tol: f64,
    /// Keep the intercept coordinate in every projection.
    pub keep_intercept: bool,
    /// Halve η within an iteration until the objective stops increasing.
    pub backtracking: bool,
    /// Initial iterate.
    pub init: Init,
    /// Retain each iterate in the trace (needed for convergence diagnostics).
    pub trace_thetas: bool,
}

impl IhtConfig {
    /// Configuration with the documented defaults: C* = 1e-3, automatic
    /// step size, tol = 1e-8, projection over all of δ, backtracking on,
    /// cold start, no retained iterates.
    #[must_use]
    pub fn new(s: usize, max_iters: usize) -> Self {
        Self {
            s,
            c_star: 1e-3,
            eta: StepSize::Auto,
            max_iters,
            tol: 1e-8,
            keep_intercept: false,
            backtracking: true,
            init: Init::Cold,
            trace_thetas: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_star > 0.0) || !self.c_star.is_finite() {
            return Err(Error::invalid(format!("c_star must be positive and finite, got {}", self.c_star)));
        }
        if let StepSize::Fixed(e) = self.eta {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::invalid(format!("eta must be positive and finite, got {e}")));
            }
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid(format!("tol must be nonnegative, got {}", self.tol)));
        }
        Ok(())
    }
}

/// One row of a fit trace. Record 0 describes the initial iterate
/// (`step_norm` and `eta_used` are 0 there); record t ≥ 1 describes the
/// iterate after update t.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub nll: f64,
    /// ‖θ^t − θ^{t−1}‖₂ for the update producing this record.
    pub step_norm: f64,
    /// Sorted nonzero δ coordinates of the iterate.
    pub support: Vec<usize>,
    /// Step size actually used (after any backtracking halvings).
    pub eta_used: f64,
    /// The iterate itself, when `trace_thetas` was set.
    pub theta: Option<Theta>,
}

/// Outcome of a centralized fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: Theta,
    pub iterations_run: usize,
    /// True when the step-norm tolerance was reached (or the line search
    /// stalled at a point it could not improve) before the iteration cap.
    pub converged: bool,
    /// Per-iteration records; length = iterations_run + 1.
    pub trace: Vec<TraceRecord>,
    pub wall_time: Duration,
}

/// The trivial feasible initializer: δ = 0, γ = C*.
#[must_use]
pub fn cold_start(d: usize, c_star: f64) -> Theta {
    Theta { delta: vec![0.0; d + 1], gamma: c_star }
}

/// One projected-gradient update: project((δ, γ) − η·grad, spec).
pub fn iht_step(theta: &Theta, grad: &[f64], eta: f64, spec: &ProjectionSpec) -> Result<Theta> {
    let p = theta.delta.len();
    if grad.len() != p + 1 {
        return Err(Error::invalid(format!(
            "gradient has {} coordinates, expected {}",
            grad.len(),
            p + 1
        )));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::invalid(format!("eta must be positive and finite, got {eta}")));
    }
    let raw: Vec<f64> = theta.delta.iter().zip(grad).map(|(d, g)| d - eta * g).collect();
    crate::sparsify::project(&raw, theta.gamma - eta * grad[p], spec)
}

/// The γ minimizing the objective at fixed δ: the positive root of
/// A·γ² − B·γ − C = 0 with A = mean(dᵢyᵢ²), B = mean(dᵢyᵢxᵢ'δ),
/// C = mean(dᵢ) (first-order condition of the uncensored block).
pub fn profile_gamma(delta: &[f64], data: &CensoredDataset) -> Result<f64> {
    if delta.len() != data.p() {
        return Err(Error::invalid(format!(
            "delta has {} coordinates but the dataset has {} design columns",
            delta.len(),
            data.p()
        )));
    }
    profile_gamma_shifted(delta, data, None, 0.0)
}

/// As [`profile_gamma`] but for an objective with an extra linear term
/// −shift·γ (the surrogate's correction): B becomes B + shift.
fn profile_gamma_shifted(
    delta: &[f64],
    data: &CensoredDataset,
    support: Option<&[usize]>,
    shift: f64,
) -> Result<f64> {
    let sums = pairwise_sum_vec(data.n(), 3, &mut |i, buf| {
        if !data.is_censored(i) {
            let y = data.y_shifted(i);
            buf[0] += y * y;
            buf[1] += y * data.xdot(i, delta, support);
            buf[2] += 1.0;
        }
    });
    let inv_n = 1.0 / data.n() as f64;
    let a = sums[0] * inv_n;
    let b = sums[1] * inv_n + shift;
    let c = sums[2] * inv_n;
    if !(a > 0.0) || !(c > 0.0) {
        return Err(Error::invalid(
            "gamma profile is degenerate (no uncensored variation)",
        ));
    }
    let root = (b + (b * b + 4.0 * a * c).sqrt()) / (2.0 * a);
    if !(root > 0.0) || !root.is_finite() {
        return Err(Error::invalid("gamma profile did not yield a positive root"));
    }
    Ok(root)
}

/// Data-driven step size 2/(λ_min + λ_max) from the Hessian at `theta0`
/// restricted to support(δ⁰) ∪ {the 2s largest-|gradient| δ coordinates}
/// ∪ {γ}, with λ_min floored at 1e-6·λ_max.
pub fn auto_step_size(data: &CensoredDataset, theta0: &Theta, s: usize) -> Result<f64> {
    auto_step_core(&ObjectiveKind::Local(data), theta0, s)
}

pub(crate) fn auto_step_core(obj: &ObjectiveKind<'_>, theta0: &Theta, s: usize) -> Result<f64> {
    let data = obj.data();
    let p = data.p();
    let support = theta0.support();
    let grad = obj.gradient(theta0, &support)?;

    let mut coords: Vec<usize> = support;
    let take = (2 * s).min(p);
    if take > 0 {
        let mut idx: Vec<usize> = (0..p).collect();
        if take < p {
            idx.select_nth_unstable_by(take - 1, |&a, &b| keeps_before(&grad[..p], a, b));
        }
        coords.extend_from_slice(&idx[..take]);
    }
    coords.push(p);
    coords.sort_unstable();
    coords.dedup();

    let h = hessian(theta0, data, HessianScope::Coords(&coords))?;
    extreme_eig_step(&h)
}

fn extreme_eig_step(h: &DMatrix<f64>) -> Result<f64> {
    let eigs = h.clone().symmetric_eigenvalues();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &l in eigs.iter() {
        lo = lo.min(l);
        hi = hi.max(l);
    }
    if !hi.is_finite() || !(hi > 0.0) {
        return Err(Error::invalid(
            "restricted Hessian has no positive curvature; cannot estimate a step size",
        ));
    }
    let lo = lo.max(1e-6 * hi);
    let eta = 2.0 / (lo + hi);
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::invalid("step-size estimate is not a positive number"));
    }
    Ok(eta)
}

/// The objective a solve runs against: the plain local likelihood, or the
/// distributed surrogate L̃(θ) = L₁(θ) − ⟨θ, c⟩ for the correction
/// c = ∇L₁(θ̄) − ∇L_N(θ̄). The two anchor gradients are kept separate so the
/// surrogate gradient can be associated as (∇L₁(θ) − ∇L₁(θ̄)) + ∇L_N(θ̄):
/// at θ = θ̄ the local terms cancel bit-exactly and the anchor identity
/// holds to the last ulp, which folding them into one difference vector
/// would destroy.
pub(crate) enum ObjectiveKind<'a> {
    Local(&'a CensoredDataset),
    Surrogate {
        data: &'a CensoredDataset,
        /// ∇L₁(θ̄): the central machine's gradient at the anchor.
        grad_at_anchor: Vec<f64>,
        /// ∇L_N(θ̄): the aggregated global gradient at the anchor.
        global_at_anchor: Vec<f64>,
    },
}

impl ObjectiveKind<'_> {
    pub(crate) fn data(&self) -> &CensoredDataset {
        match self {
            ObjectiveKind::Local(d) => d,
            ObjectiveKind::Surrogate { data, .. } => data,
        }
    }

    fn gamma_shift(&self) -> f64 {
        match self {
            ObjectiveKind::Local(_) => 0.0,
            ObjectiveKind::Surrogate { data, grad_at_anchor, global_at_anchor } => {
                grad_at_anchor[data.p()] - global_at_anchor[data.p()]
            }
        }
    }

    pub(crate) fn value(&self, theta: &Theta, support: &[usize]) -> Result<f64> {
        match self {
            ObjectiveKind::Local(d) => nll_on_support(theta, d, support),
            ObjectiveKind::Surrogate { data, grad_at_anchor, global_at_anchor } => {
                let base = nll_on_support(theta, data, support)?;
                let mut lin = 0.0;
                for ((t, gb), gn) in
                    theta.delta.iter().zip(grad_at_anchor.iter()).zip(global_at_anchor.iter())
                {
                    lin += t * (gb - gn);
                }
                let p = data.p();
                lin += theta.gamma * (grad_at_anchor[p] - global_at_anchor[p]);
                Ok(base - lin)
            }
        }
    }

    pub(crate) fn gradient(&self, theta: &Theta, support: &[usize]) -> Result<Vec<f64>> {
        match self {
            ObjectiveKind::Local(d) => gradient_on_support(theta, d, support),
            ObjectiveKind::Surrogate { data, grad_at_anchor, global_at_anchor } => {
                let mut g = gradient_on_support(theta, data, support)?;
                for ((gi, gb), gn) in
                    g.iter_mut().zip(grad_at_anchor.iter()).zip(global_at_anchor.iter())
                {
                    *gi = (*gi - gb) + gn;
                }
                Ok(g)
            }
        }
    }
}

/// Which error to raise when the objective goes non-finite.
#[derive(Debug, Clone, Copy)]
pub(crate) enum DivergenceContext {
    Local,
    Round(usize),
}

impl DivergenceContext {
    fn error(self, iteration: usize) -> Error {
        match self {
            DivergenceContext::Local => Error::Divergence { iteration },
            DivergenceContext::Round(round) => Error::DistDivergence { round, iteration },
        }
    }
}

pub(crate) struct EngineOutput {
    pub theta: Theta,
    pub iterations_run: usize,
    pub converged: bool,
    pub trace: Vec<TraceRecord>,
}

/// Shared IHT iteration engine. `config.init` is ignored — the caller
/// passes the resolved starting point — so the centralized solver and the
/// distributed inner loop run literally the same code.
pub(crate) fn run_engine(
    obj: &ObjectiveKind<'_>,
    start: Theta,
    config: &IhtConfig,
    ctx: DivergenceContext,
) -> Result<EngineOutput> {
    let data = obj.data();
    let p = data.p();
    if start.delta.len() != p {
        return Err(Error::invalid(format!(
            "initial delta has {} coordinates but the dataset has {} design columns",
            start.delta.len(),
            p
        )));
    }
    if config.s > p {
        return Err(Error::invalid(format!(
            "sparsity budget {} exceeds the number of design columns {}",
            config.s, p
        )));
    }
    if start.nnz() > config.s {
        return Err(Error::invalid(format!(
            "initial iterate has {} nonzeros, more than the budget {}",
            start.nnz(),
            config.s
        )));
    }
    if !(start.gamma >= config.c_star) {
        return Err(Error::invalid(format!(
            "initial gamma {} lies below the bound {}",
            start.gamma, config.c_star
        )));
    }
    let spec = ProjectionSpec::new(config.s, config.c_star, config.keep_intercept)?;

    let mut theta = start;
    let mut support = theta.support();
    let mut cur = obj.value(&theta, &support)?;
    if !cur.is_finite() {
        return Err(ctx.error(0));
    }

    let mut trace = Vec::with_capacity(config.max_iters.min(4096) + 1);
    trace.push(TraceRecord {
        iter: 0,
        nll: cur,
        step_norm: 0.0,
        support: support.clone(),
        eta_used: 0.0,
        theta: config.trace_thetas.then(|| theta.clone()),
    });

    let mut iterations_run = 0;
    let mut converged = false;

    for t in 1..=config.max_iters {
        let grad = obj.gradient(&theta, &support)?;

        let base_eta = match config.eta {
            StepSize::Fixed(e) => e,
            StepSize::Auto => {
                // Estimate curvature at the γ-profiled companion point.
                let gamma_eval = match profile_gamma_shifted(
                    &theta.delta,
                    data,
                    Some(&support),
                    obj.gamma_shift(),
                ) {
                    Ok(g) => g.max(config.c_star),
                    Err(_) => theta.gamma,
                };
                let eval_point = Theta { delta: theta.delta.clone(), gamma: gamma_eval };
                auto_step_core(obj, &eval_point, config.s)?
            }
        };

        let mut eta = base_eta;
        let mut accepted: Option<(Theta, f64)> = None;
        let mut stalled = false;
        if config.backtracking {
            for halving in 0..=30 {
                let trial = iht_step(&theta, &grad, eta, &spec)?;
                let trial_support = trial.support();
                let trial_nll = obj.value(&trial, &trial_support)?;
                if trial_nll.is_finite() && trial_nll <= cur + 1e-12 {
                    accepted = Some((trial, trial_nll));
                    break;
                }
                if halving < 30 {
                    eta *= 0.5;
                }
            }
            if accepted.is_none() {
                stalled = true;
            }
        } else {
            let trial = iht_step(&theta, &grad, eta, &spec)?;
            let trial_support = trial.support();
            let trial_nll = obj.value(&trial, &trial_support)?;
            if !trial_nll.is_finite() {
                return Err(ctx.error(t));
            }
            accepted = Some((trial, trial_nll));
        }

        iterations_run = t;
        if stalled {
            // The line search could not find a descent step: keep the
            // iterate, record the iteration, and stop as converged.
            trace.push(TraceRecord {
                iter: t,
                nll: cur,
                step_norm: 0.0,
                support: support.clone(),
                eta_used: eta,
                theta: config.trace_thetas.then(|| theta.clone()),
            });
            converged = true;
            break;
        }
        let (next, next_nll) = accepted.expect("accepted set unless stalled");
        let step_norm = next.l2_distance(&theta);
        theta = next;
        cur = next_nll;
        support = theta.support();
        trace.push(TraceRecord {
            iter: t,
            nll: cur,
            step_norm,
            support: support.clone(),
            eta_used: eta,
            theta: config.trace_thetas.then(|| theta.clone()),
        });
        if step_norm < config.tol {
            converged = true;
            break;
        }
    }

    Ok(EngineOutput { theta, iterations_run, converged, trace })
}

/// Run centralized IHT on a dataset.
pub fn fit(data: &CensoredDataset, config: &IhtConfig) -> Result<FitResult> {
    let begun = Instant::now();
    data.validate()?;
    config.validate()?;
    let start = match &config.init {
        Init::Cold => cold_start(data.d(), config.c_star),
        Init::Warm(t) => {
            if !(t.gamma > 0.0) || !t.gamma.is_finite() || t.delta.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("warm start must be finite with positive gamma"));
            }
            t.clone()
        }
    };
    let out = run_engine(&ObjectiveKind::Local(data), start, config, DivergenceContext::Local)?;
    Ok(FitResult {
        theta: out.theta,
        iterations_run: out.iterations_run,
        converged: out.converged,
        trace: out.trace,
        wall_time: begun.elapsed(),
    })
}
