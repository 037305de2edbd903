//! Optimal piecewise polynomial segmentation with Fisher's algorithm.
//!
//! Segments noisy step-like curves for K = 1..6 and shows how the optimal
//! cost falls with each extra segment, then prints the chosen breakpoints.
//!
//! cargo run --release --example segment_curves -- [K] [p]

use regimecurve::piecewise::{cost_tables, SegmentOptions};
use regimecurve::simulate::{sample_rhlp, smoothness_spec};
use regimecurve::{fisher_segment, piecewise_approximation};

fn main() -> regimecurve::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let k = args.first().copied().unwrap_or(3);
    let p = args.get(1).copied().unwrap_or(0);

    let sim = sample_rhlp(&smoothness_spec(1)?.with_seed(4))?;
    let curves = &sim.curves;

    let tables = cost_tables(curves, 6, p, SegmentOptions::default())?;
    println!("K\toptimal cost");
    for kk in 1..=6 {
        println!("{kk}\t{:.3}", tables.optimal_cost(kk));
    }

    let model = fisher_segment(curves, k, p)?;
    let t = curves.times();
    println!("\nK = {k}, p = {p}: loglik {:.3}", model.loglik);
    for (s, (w, r)) in model.gamma.windows(2).zip(&model.regimes).enumerate() {
        println!(
            "  segment {}: t in [{:.3}, {:.3}]  beta {:?}  sigma2 {:.3}",
            s + 1,
            t[w[0]],
            t[w[1] - 1],
            r.beta,
            r.sigma2
        );
    }
    let fit = piecewise_approximation(&model);
    let err = fit.iter().zip(&sim.mean_curve).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / fit.len() as f64;
    println!("mean-curve MSE {err:.4}");
    Ok(())
}
