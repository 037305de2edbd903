//! Cross-validated MAP classification of Breiman's three waveform classes
//! with both class-conditional model families.
//!
//! cargo run --release --example classify_waveforms -- [curves per class] [seeds]

use std::time::Instant;

use regimecurve::classify::{Family, TrainSpec};
use regimecurve::eval::{kfold_cv, mean_std};
use regimecurve::simulate::waveform;

fn main() -> regimecurve::Result<()> {
    let mut args = std::env::args().skip(1).filter_map(|a| a.parse::<u64>().ok());
    let per_class = args.next().unwrap_or(500) as usize;
    let seeds = args.next().unwrap_or(5);
    for family in [Family::Rhlp, Family::Piecewise] {
        let spec = TrainSpec::new(family, 2, 3);
        let start = Instant::now();
        let mut errors = Vec::new();
        for seed in 0..seeds {
            let (curves, labels) = waveform(per_class, seed)?;
            let report = kfold_cv(&curves, &labels, 5, &spec, seed)?;
            println!("{family} seed {seed}: {:.2}% ({:.2})", 100.0 * report.mean_error, 100.0 * report.std_error);
            errors.push(report.mean_error);
        }
        let (mean, std) = mean_std(&errors);
        println!("{family}: mean error {:.2}% ± {:.2} over {seeds} seeds [{:.1?}]", 100.0 * mean, 100.0 * std, start.elapsed());
    }
    Ok(())
}
