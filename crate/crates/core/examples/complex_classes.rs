//! Classes that mix several generating processes are harder to model with a
//! single RHLP per class. Compares 5-fold CV error on a heterogeneous
//! two-class sample against a baseline where each class has one generator.
//!
//! cargo run --release --example complex_classes -- [seeds]

use regimecurve::classify::{Family, TrainSpec};
use regimecurve::eval::{kfold_cv, mean_std};
use regimecurve::simulate::{complex_classes, homogeneous_classes, switch_standins};

fn main() -> regimecurve::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let models = switch_standins();
    let spec = TrainSpec::new(Family::Rhlp, 3, 2);
    let (mut het, mut hom) = (Vec::new(), Vec::new());
    for seed in 0..seeds {
        let (c, l) = complex_classes(&models, seed)?;
        het.push(kfold_cv(&c, &l, 5, &spec, seed)?.mean_error);
        let (c, l) = homogeneous_classes(&models, seed)?;
        hom.push(kfold_cv(&c, &l, 5, &spec, seed)?.mean_error);
        println!("seed {seed}: heterogeneous {:.3}, homogeneous {:.3}", het[het.len() - 1], hom[hom.len() - 1]);
    }
    let (hm, hs) = mean_std(&het);
    let (bm, bs) = mean_std(&hom);
    println!("heterogeneous {:.2}% ± {:.2}, homogeneous {:.2}% ± {:.2}", 100.0 * hm, 100.0 * hs, 100.0 * bm, 100.0 * bs);
    Ok(())
}
