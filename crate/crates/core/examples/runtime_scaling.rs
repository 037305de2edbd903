//! Single-threaded wall time of both estimators as the curve size m grows.
//!
//! cargo run --release --example runtime_scaling -- [repetitions]

use regimecurve::classify::Family;
use regimecurve::eval::{runtime_bench, BenchConfig};
use regimecurve::EmConfig;

fn main() -> regimecurve::Result<()> {
    let repetitions = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let cfg = BenchConfig {
        cells: [100, 200, 300, 400, 500].iter().map(|&m| (50, m)).collect(),
        methods: vec![Family::Piecewise, Family::Rhlp],
        k: 3,
        p: 2,
        repetitions,
        seed: 7,
        em: EmConfig::default(),
    };
    let report = runtime_bench(&cfg)?;
    print!("{}", report.to_tsv());
    for method in [Family::Piecewise, Family::Rhlp] {
        let ratio = report.seconds(method, 50, 400).unwrap() / report.seconds(method, 50, 200).unwrap();
        println!("{method}: time(m=400) / time(m=200) = {ratio:.2}");
    }
    Ok(())
}
