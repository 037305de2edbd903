//! Mean-curve error of both estimators as regime transitions go from abrupt
//! (level 1) to gradual (level 10).
//!
//! cargo run --release --example smoothness_study -- [seeds]

use regimecurve::eval::compare_approximations;
use regimecurve::simulate::{sample_rhlp, smoothness_spec};
use regimecurve::EmConfig;

fn main() -> regimecurve::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let em = EmConfig::default();
    println!("level\trhlp_mse\tpiecewise_mse");
    for level in 1..=10 {
        let (mut rhlp, mut pw) = (0.0, 0.0);
        for seed in 0..seeds {
            let sim = sample_rhlp(&smoothness_spec(level)?.with_seed(seed))?;
            let e = compare_approximations(&sim.curves, &sim.mean_curve, 3, 0, &em)?;
            rhlp += e.rhlp;
            pw += e.piecewise;
        }
        println!("{level}\t{:.4}\t{:.4}", rhlp / seeds as f64, pw / seeds as f64);
    }
    Ok(())
}
