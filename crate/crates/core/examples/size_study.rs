//! Mean-curve error of both estimators as the curve size m and the number of
//! curves n grow, with the Spearman correlation of each trend.
//!
//! cargo run --release --example size_study -- [seeds]

use regimecurve::eval::{compare_approximations, spearman};
use regimecurve::simulate::{sample_rhlp, three_regime_spec};
use regimecurve::EmConfig;

fn sweep(label: &str, cells: &[(usize, usize)], seeds: u64) -> regimecurve::Result<()> {
    let em = EmConfig::default();
    let (mut xs, mut rhlp, mut pw) = (Vec::new(), Vec::new(), Vec::new());
    println!("{label}\trhlp_mse\tpiecewise_mse");
    for &(n, m) in cells {
        let (mut a, mut b) = (0.0, 0.0);
        for seed in 0..seeds {
            let sim = sample_rhlp(&three_regime_spec(n, m)?.with_seed(seed))?;
            let e = compare_approximations(&sim.curves, &sim.mean_curve, 3, 2, &em)?;
            a += e.rhlp / seeds as f64;
            b += e.piecewise / seeds as f64;
        }
        let x = if label == "m" { m } else { n };
        println!("{x}\t{a:.5}\t{b:.5}");
        xs.push(x as f64);
        rhlp.push(a);
        pw.push(b);
    }
    println!("spearman: rhlp {:.2}, piecewise {:.2}\n", spearman(&xs, &rhlp), spearman(&xs, &pw));
    Ok(())
}

fn main() -> regimecurve::Result<()> {
    let seeds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let by_m: Vec<_> = (1..=5).map(|s| (50, 100 * s)).collect();
    let by_n: Vec<_> = (1..=10).map(|s| (10 * s, 100)).collect();
    sweep("m", &by_m, seeds)?;
    sweep("n", &by_n, seeds)
}
