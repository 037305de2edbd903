//! Fits the hidden logistic process model to simulated three-regime curves
//! and compares its mean-curve error with the optimal piecewise fit.
//!
//! cargo run --release --example fit_rhlp -- [n] [m] [seed]

use std::time::Instant;

use regimecurve::eval::approximation_mse;
use regimecurve::simulate::{sample_rhlp, three_regime_spec};
use regimecurve::{fisher_segment, fit_em, piecewise_approximation, rhlp_approximation, EmConfig};

fn main() -> regimecurve::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(50) as usize;
    let m = args.get(1).copied().unwrap_or(100) as usize;
    let seed = args.get(2).copied().unwrap_or(1);

    let sim = sample_rhlp(&three_regime_spec(n, m)?.with_seed(seed))?;

    let start = Instant::now();
    let (model, trace) = fit_em(&sim.curves, 3, 2, &EmConfig::default())?;
    let rhlp_time = start.elapsed();

    let start = Instant::now();
    let pw = fisher_segment(&sim.curves, 3, 2)?;
    let pw_time = start.elapsed();

    println!("RHLP: loglik {:.3} after {} iterations (restart {}), {:.3?}", model.loglik, trace.iterations, trace.restart, rhlp_time);
    for (k, (r, w)) in model.regimes.iter().zip(&model.gate.w).enumerate() {
        println!("  regime {}: beta {:?}  sigma2 {:.4}  w {:?}", k + 1, r.beta, r.sigma2, w);
    }
    println!("piecewise: gamma {:?}, loglik {:.3}, {:.3?}", pw.gamma, pw.loglik, pw_time);
    println!(
        "mean-curve MSE: rhlp {:.5}, piecewise {:.5}",
        approximation_mse(&sim.mean_curve, &rhlp_approximation(&model))?,
        approximation_mse(&sim.mean_curve, &piecewise_approximation(&pw))?
    );
    Ok(())
}
