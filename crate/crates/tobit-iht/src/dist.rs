//! Communication-efficient distributed IHT over M simulated machines.
//!
//! Each outer round broadcasts the current estimate θ̄, aggregates the
//! per-machine gradients into ∇L_N(θ̄), and then runs the inner IHT loop on
//! the central machine's surrogate objective
//!
//! ```text
//! L̃(θ) = L₁(θ) − ⟨θ, ∇L₁(θ̄) − ∇L_N(θ̄)⟩,
//! ```
//!
//! whose gradient agrees with the global gradient at the anchor θ̄. Only
//! gradient vectors cross machine boundaries — raw rows never leave their
//! worker — and the communication log counts exactly two (d+2)-vectors per
//! non-central machine per round.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{gradient, CensoredDataset, Theta};
use crate::reduce::pairwise_sum_vec;
use crate::solver::{
    cold_start, run_engine, DivergenceContext, IhtConfig, Init, ObjectiveKind, TraceRecord,
};

/// One machine's local sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub machine_id: usize,
    pub data: CensoredDataset,
}

/// Configuration of a distributed fit: the inner solver settings (its
/// `init` field is ignored — every inner loop warm-starts from the current
/// θ̄), the number of outer rounds Q ≥ 1, and the round-0 initializer.
#[derive(Debug, Clone, PartialEq)]
pub struct DistConfig {
    pub inner: IhtConfig,
    pub outer_rounds: usize,
    pub init: Init,
}

impl DistConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_rounds == 0 {
            return Err(Error::invalid("outer_rounds must be at least 1"));
        }
        self.inner.validate()
    }
}

/// Communication accounting for a distributed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLog {
    /// Outer rounds executed.
    pub rounds: usize,
    /// (d+2)-vectors transmitted: per round, one broadcast of θ̄ to each
    /// non-central machine and one gradient back from each.
    pub vectors_sent: usize,
    /// vectors_sent × (d+2) × 8 bytes.
    pub bytes_estimate: usize,
}

/// A remote gradient evaluator. The coordinator only ever sees machine id,
/// sample size, and gradient vectors — never rows — so a network transport
/// can implement this same interface.
pub trait GradientWorker {
    fn machine_id(&self) -> usize;
    fn sample_size(&self) -> usize;
    /// ∇L_m(θ) on this machine's local sample.
    fn gradient_at(&self, theta: &Theta) -> Result<Vec<f64>>;
}

/// The in-process worker used by the simulation harness.
pub struct InProcessWorker<'a> {
    shard: &'a Shard,
}

impl<'a> InProcessWorker<'a> {
    #[must_use]
    pub fn new(shard: &'a Shard) -> Self {
        Self { shard }
    }
}

impl GradientWorker for InProcessWorker<'_> {
    fn machine_id(&self) -> usize {
        self.shard.machine_id
    }
    fn sample_size(&self) -> usize {
        self.shard.data.n()
    }
    fn gradient_at(&self, theta: &Theta) -> Result<Vec<f64>> {
        gradient(theta, &self.shard.data)
    }
}

/// ∇L_m(θ̄) on one shard — exactly the model gradient of its local sample.
pub fn local_gradient(shard: &Shard, theta_bar: &Theta) -> Result<Vec<f64>> {
    gradient(theta_bar, &shard.data)
}

/// Sample-size-weighted aggregate Σ_m (n_m/N)·g_m, summed in ascending
/// machine order with the fixed pairwise tree. Reduces to the simple
/// average when all shards have equal size, and returns the single gradient
/// bit-unchanged when M = 1.
pub fn aggregate_gradients(grads: &[(usize, Vec<f64>, usize)]) -> Result<Vec<f64>> {
    if grads.is_empty() {
        return Err(Error::Protocol("no gradients to aggregate".into()));
    }
    let mut by_id: Vec<&(usize, Vec<f64>, usize)> = grads.iter().collect();
    by_id.sort_by_key(|g| g.0);
    for (k, g) in by_id.iter().enumerate() {
        if g.0 != k {
            return Err(Error::IncompleteRound { machine_id: k });
        }
    }
    let len = by_id[0].1.len();
    if by_id.iter().any(|g| g.1.len() != len) {
        return Err(Error::Protocol("gradient length mismatch between machines".into()));
    }
    if by_id.iter().any(|g| g.2 == 0) {
        return Err(Error::Protocol("machine reported an empty sample".into()));
    }
    if by_id.len() == 1 {
        return Ok(by_id[0].1.clone());
    }
    let total: usize = by_id.iter().map(|g| g.2).sum();
    let inv_total = 1.0 / total as f64;
    Ok(pairwise_sum_vec(by_id.len(), len, &mut |m, buf| {
        let w = by_id[m].2 as f64 * inv_total;
        for (b, g) in buf.iter_mut().zip(&by_id[m].1) {
            *b += w * g;
        }
    }))
}

/// Gradient of the surrogate loss: ∇L₁(θ) − ∇L₁(θ̄) + ∇L_N(θ̄).
///
/// When the correction ∇L₁(θ̄) − ∇L_N(θ̄) is identically zero (the
/// single-machine case) the local gradient is returned as-is, keeping the
/// M = 1 reduction bit-exact; otherwise the association
/// (∇L₁(θ) − ∇L₁(θ̄)) + ∇L_N(θ̄) makes the two local terms cancel exactly
/// at the anchor θ = θ̄.
pub fn surrogate_gradient(
    theta: &Theta,
    theta_bar: &Theta,
    central_shard: &Shard,
    global_grad_at_bar: &[f64],
) -> Result<Vec<f64>> {
    let g_theta = gradient(theta, &central_shard.data)?;
    if global_grad_at_bar.len() != g_theta.len() {
        return Err(Error::Protocol(format!(
            "aggregated gradient has {} coordinates, expected {}",
            global_grad_at_bar.len(),
            g_theta.len()
        )));
    }
    let g_bar = gradient(theta_bar, &central_shard.data)?;
    let zero_correction = g_bar
        .iter()
        .zip(global_grad_at_bar)
        .all(|(a, b)| *a - *b == 0.0);
    if zero_correction {
        return Ok(g_theta);
    }
    Ok(g_theta
        .iter()
        .zip(&g_bar)
        .zip(global_grad_at_bar)
        .map(|((g, gb), gn)| (g - gb) + gn)
        .collect())
}

/// Theorem-guided outer-round count Q ≈ log N / log n (1 when n = N).
pub fn recommended_rounds(n: usize, total_n: usize) -> Result<usize> {
    if n < 1 || n > total_n {
        return Err(Error::invalid(format!(
            "shard size {n} must lie in [1, {total_n}]"
        )));
    }
    if n == total_n {
        return Ok(1);
    }
    if n == 1 {
        return Err(Error::invalid(
            "outer-round recommendation is undefined for single-observation shards",
        ));
    }
    // Guard the ceiling against floating-point overshoot on exact powers.
    let q = ((total_n as f64).ln() / (n as f64).ln() - 1e-9).ceil();
    Ok((q as usize).max(1))
}

/// One row of a distributed trace: inner-iteration records indexed by
/// (round, iter). `nll` is the inner (surrogate) objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct DistTraceRecord {
    pub round: usize,
    pub iter: usize,
    pub nll: f64,
    pub step_norm: f64,
    pub support: Vec<usize>,
    pub eta_used: f64,
    pub theta: Option<Theta>,
}

/// Per-round summary: the anchor-identity gap ‖∇L̃(θ̄) − ∇L_N(θ̄)‖∞ and the
/// inner loop's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundInfo {
    pub round: usize,
    pub anchor_gap_inf: f64,
    pub inner_iterations: usize,
    pub inner_converged: bool,
}

/// Outcome of a distributed fit.
#[derive(Debug, Clone)]
pub struct DistFitResult {
    pub theta: Theta,
    pub rounds_run: usize,
    /// Convergence flag of the final round's inner loop.
    pub converged: bool,
    pub trace: Vec<DistTraceRecord>,
    pub rounds: Vec<RoundInfo>,
    pub wall_time: Duration,
}

/// Distributed fit over in-process shards. `shards[i]` must carry
/// `machine_id == i`; shard 0 is the central machine whose sample hosts the
/// inner loops.
pub fn fit_distributed(shards: &[Shard], config: &DistConfig) -> Result<(DistFitResult, CommLog)> {
    if shards.is_empty() {
        return Err(Error::invalid("at least one shard is required"));
    }
    for (i, sh) in shards.iter().enumerate() {
        if sh.machine_id != i {
            return Err(Error::Protocol(format!(
                "shard at position {i} carries machine_id {}; shards must be ordered 0..M",
                sh.machine_id
            )));
        }
        sh.data.validate()?;
        if sh.data.p() != shards[0].data.p() {
            return Err(Error::Protocol(format!(
                "machine {i} has {} design columns, machine 0 has {}",
                sh.data.p(),
                shards[0].data.p()
            )));
        }
    }
    let workers: Vec<InProcessWorker<'_>> = shards[1..].iter().map(InProcessWorker::new).collect();
    let worker_refs: Vec<&dyn GradientWorker> =
        workers.iter().map(|w| w as &dyn GradientWorker).collect();
    fit_distributed_with_workers(&shards[0], &worker_refs, config)
}

/// Distributed fit against opaque gradient workers (the transport-ready
/// form). The central shard must be machine 0; workers carry ids 1..M and
/// are trusted to have validated their own samples.
pub fn fit_distributed_with_workers(
    central: &Shard,
    workers: &[&dyn GradientWorker],
    config: &DistConfig,
) -> Result<(DistFitResult, CommLog)> {
    let begun = Instant::now();
    config.validate()?;
    if central.machine_id != 0 {
        return Err(Error::Protocol(format!(
            "central shard must be machine 0, got {}",
            central.machine_id
        )));
    }
    central.data.validate()?;
    let p = central.data.p();
    let machines = workers.len() + 1;

    let mut theta = match &config.init {
        Init::Cold => cold_start(central.data.d(), config.inner.c_star),
        Init::Warm(t) => {
            if !(t.gamma > 0.0) || !t.gamma.is_finite() || t.delta.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("warm start must be finite with positive gamma"));
            }
            t.clone()
        }
    };

    let mut comm = CommLog { rounds: 0, vectors_sent: 0, bytes_estimate: 0 };
    let mut trace = Vec::new();
    let mut rounds = Vec::with_capacity(config.outer_rounds);
    let mut converged = false;

    for q in 0..config.outer_rounds {
        let theta_bar = theta.clone();

        // Broadcast θ̄, collect local gradients (machine 0 evaluates its own).
        let mut grads: Vec<(usize, Vec<f64>, usize)> = Vec::with_capacity(machines);
        let g_central = gradient(&theta_bar, &central.data)?;
        grads.push((0, g_central.clone(), central.data.n()));
        for w in workers {
            grads.push((w.machine_id(), w.gradient_at(&theta_bar)?, w.sample_size()));
        }
        comm.rounds = q + 1;
        comm.vectors_sent += 2 * (machines - 1);

        let global = aggregate_gradients(&grads)?;
        let zero_correction =
            g_central.iter().zip(&global).all(|(a, b)| *a - *b == 0.0);
        let objective = if zero_correction {
            // Exactly-zero correction (M = 1): run the plain local
            // objective so the reduction to the centralized solver is
            // structural, hence bit-identical.
            ObjectiveKind::Local(&central.data)
        } else {
            ObjectiveKind::Surrogate {
                data: &central.data,
                grad_at_anchor: g_central.clone(),
                global_at_anchor: global.clone(),
            }
        };

        // Anchor identity ∇L̃(θ̄) = ∇L_N(θ̄), logged per round.
        let bar_support = theta_bar.support();
        let surrogate_at_bar = objective.gradient(&theta_bar, &bar_support)?;
        let anchor_gap_inf = surrogate_at_bar
            .iter()
            .zip(&global)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);

        let inner = run_engine(&objective, theta_bar, &config.inner, DivergenceContext::Round(q))?;
        for rec in &inner.trace {
            let TraceRecord { iter, nll, step_norm, support, eta_used, theta: th } = rec;
            trace.push(DistTraceRecord {
                round: q,
                iter: *iter,
                nll: *nll,
                step_norm: *step_norm,
                support: support.clone(),
                eta_used: *eta_used,
                theta: th.clone(),
            });
        }
        rounds.push(RoundInfo {
            round: q,
            anchor_gap_inf,
            inner_iterations: inner.iterations_run,
            inner_converged: inner.converged,
        });
        converged = inner.converged;
        theta = inner.theta;
    }

    comm.bytes_estimate = comm.vectors_sent * (p + 1) * 8;
    Ok((
        DistFitResult {
            theta,
            rounds_run: comm.rounds,
            converged,
            trace,
            rounds,
            wall_time: begun.elapsed(),
        },
        comm,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::fit;

    fn small_dataset(shift: f64) -> CensoredDataset {
        let x_raw: Vec<f64> = (0..12)
            .map(|i| ((i * 7 + 3) % 11) as f64 / 5.0 - 1.0 + shift)
            .collect();
        let y: Vec<f64> = (0..6)
            .map(|i| if i % 3 == 0 { 0.0 } else { 0.4 + 0.3 * i as f64 + shift.abs() })
            .collect();
        CensoredDataset::from_covariates(&x_raw, 2, y, 0.0).unwrap()
    }

    #[test]
    fn recommended_rounds_examples() {
        assert_eq!(recommended_rounds(100, 10_000).unwrap(), 2);
        assert_eq!(recommended_rounds(50, 5_000).unwrap(), 3);
        assert_eq!(recommended_rounds(200, 2_000).unwrap(), 2);
        assert_eq!(recommended_rounds(777, 777).unwrap(), 1);
        assert_eq!(recommended_rounds(1, 1).unwrap(), 1);
        assert!(recommended_rounds(0, 5).is_err());
        assert!(recommended_rounds(10, 5).is_err());
        assert!(recommended_rounds(1, 5).is_err());
    }

    #[test]
    fn aggregate_single_machine_is_bitwise_identity() {
        let g = vec![0.25, -1.5, 3.0e-7];
        let out = aggregate_gradients(&[(0, g.clone(), 7)]).unwrap();
        for (a, b) in out.iter().zip(&g) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn aggregate_symmetric_gradients_cancel() {
        let g = vec![1.0, -2.0, 0.5];
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let out = aggregate_gradients(&[(0, g, 10), (1, neg, 10)]).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn aggregate_weights_by_sample_size() {
        let out = aggregate_gradients(&[(0, vec![1.0], 10), (1, vec![5.0], 30)]).unwrap();
        assert!((out[0] - (0.25 * 1.0 + 0.75 * 5.0)).abs() < 1e-15);
    }

    #[test]
    fn aggregate_detects_missing_and_mismatched_machines() {
        let e = aggregate_gradients(&[(0, vec![1.0], 5), (2, vec![1.0], 5)]).unwrap_err();
        assert_eq!(e, Error::IncompleteRound { machine_id: 1 });
        let e = aggregate_gradients(&[(0, vec![1.0], 5), (1, vec![1.0, 2.0], 5)]).unwrap_err();
        assert!(matches!(e, Error::Protocol(_)));
    }

    #[test]
    fn surrogate_gradient_at_anchor_equals_global() {
        let shard = Shard { machine_id: 0, data: small_dataset(0.0) };
        let theta_bar = Theta { delta: vec![0.1, -0.2, 0.05], gamma: 0.9 };
        // A made-up aggregate, as if from other machines.
        let global: Vec<f64> = (0..4).map(|k| 0.01 * (k as f64 + 1.0)).collect();
        let g = surrogate_gradient(&theta_bar, &theta_bar, &shard, &global).unwrap();
        for (a, b) in g.iter().zip(&global) {
            assert!((a - b).abs() <= 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn surrogate_gradient_single_machine_reduces_to_local() {
        let shard = Shard { machine_id: 0, data: small_dataset(0.0) };
        let theta_bar = Theta { delta: vec![0.1, -0.2, 0.05], gamma: 0.9 };
        let theta = Theta { delta: vec![-0.3, 0.0, 0.4], gamma: 1.4 };
        let global = local_gradient(&shard, &theta_bar).unwrap();
        let g = surrogate_gradient(&theta, &theta_bar, &shard, &global).unwrap();
        let direct = local_gradient(&shard, &theta).unwrap();
        for (a, b) in g.iter().zip(&direct) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn single_machine_fit_is_bit_identical_to_local() {
        let data = small_dataset(0.0);
        let mut inner = IhtConfig::new(2, 40);
        inner.tol = 0.0; // exact-T semantics so both sides do the same work
        let local = fit(&data, &inner).unwrap();
        let shards = vec![Shard { machine_id: 0, data }];
        let cfg = DistConfig { inner, outer_rounds: 1, init: Init::Cold };
        let (dist, comm) = fit_distributed(&shards, &cfg).unwrap();
        assert_eq!(dist.theta.gamma.to_bits(), local.theta.gamma.to_bits());
        for (a, b) in dist.theta.delta.iter().zip(&local.theta.delta) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(comm.vectors_sent, 0);
        assert_eq!(dist.rounds[0].anchor_gap_inf, 0.0);
    }

    #[test]
    fn communication_accounting_is_exact() {
        let shards: Vec<Shard> = (0..3)
            .map(|m| Shard { machine_id: m, data: small_dataset(m as f64 * 0.1) })
            .collect();
        let mut inner = IhtConfig::new(2, 5);
        inner.tol = 0.0;
        let cfg = DistConfig { inner, outer_rounds: 4, init: Init::Cold };
        let (res, comm) = fit_distributed(&shards, &cfg).unwrap();
        assert_eq!(comm.rounds, 4);
        assert_eq!(comm.vectors_sent, 4 * 2 * 2);
        assert_eq!(comm.bytes_estimate, comm.vectors_sent * 4 * 8);
        assert_eq!(res.rounds_run, 4);
        for info in &res.rounds {
            assert!(info.anchor_gap_inf <= 1e-14, "round {}: {}", info.round, info.anchor_gap_inf);
        }
    }

    #[test]
    fn config_and_shard_validation() {
        let data = small_dataset(0.0);
        let cfg = DistConfig { inner: IhtConfig::new(1, 5), outer_rounds: 0, init: Init::Cold };
        assert!(cfg.validate().is_err());
        let shards = vec![Shard { machine_id: 1, data }];
        let cfg = DistConfig { inner: IhtConfig::new(1, 5), outer_rounds: 1, init: Init::Cold };
        assert!(matches!(fit_distributed(&shards, &cfg), Err(Error::Protocol(_))));
        assert!(fit_distributed(&[], &cfg).is_err());
    }
}
