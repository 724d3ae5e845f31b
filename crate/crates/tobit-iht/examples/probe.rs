// examples/probe.rs
use tobit_iht::datagen::{derive_seed, generate, GenSpec};
use tobit_iht::eval::convergence_diagnostics;
use tobit_iht::solver::{fit, IhtConfig};

fn main() {
    for r in 0..50u64 {
        let spec = GenSpec {
            beta0: 0.0,
            signal_strength: 1.0,
            sigma_star: 1.0,
            ..GenSpec::new(2_000, 200, 5, derive_seed(54_000, r))
        };
        let (data, _) = generate(&spec).unwrap();
        let mut cfg = IhtConfig::new(5, 500);
        cfg.trace_thetas = true;
        let res = fit(&data, &cfg).unwrap();
        let rows = convergence_diagnostics(&res.trace, &res.theta, cfg.tol).unwrap();
        let bad: Vec<(usize, f64, f64)> = rows
            .iter()
            .filter_map(|row| row.ratio.map(|q| (row.t, row.error_to_ref, q)))
            .filter(|&(_, _, q)| q > 0.95)
            .collect();
        if !bad.is_empty() {
            println!("rep {r}: iters={} converged={} bad={:?}", res.iterations_run, res.converged, &bad[..bad.len().min(8)]);
            if r < 12 {
                for rec in res.trace.iter().take(14) {
                    let th = rec.theta.as_ref().unwrap();
                    println!("  t={:3} nll={:+.9} step={:.3e} eta={:.3e} gamma={:.5} supp={}",
                        rec.iter, rec.nll, rec.step_norm, rec.eta_used, th.gamma, rec.support.len());
                }
            }
        }
    }
}
