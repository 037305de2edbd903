//! Round trip through the file formats: simulate curves, write them as CSV,
//! fit both model families, store the fits as JSON and emit plot tables.
//!
//! cargo run --release --example simulate_io -- [out_dir]

use std::path::PathBuf;

use regimecurve::io::{emit_plot_data, read_curves, read_model, write_curves, write_model, Model};
use regimecurve::simulate::{sample_rhlp, three_regime_spec};
use regimecurve::{fisher_segment, fit_em, EmConfig};

fn main() -> regimecurve::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("regimecurve-demo"));
    std::fs::create_dir_all(&dir).map_err(|source| regimecurve::Error::Io {
        path: dir.clone(),
        source,
    })?;

    let sim = sample_rhlp(&three_regime_spec(20, 80)?.with_seed(3))?;
    let csv = dir.join("curves.csv");
    write_curves(&csv, &sim.curves)?;
    let curves = read_curves(&csv)?;
    assert_eq!(curves, sim.curves);

    let (rhlp, _) = fit_em(&curves, 3, 2, &EmConfig::default())?;
    let pw = fisher_segment(&curves, 3, 2)?;
    for (name, model) in [("rhlp", Model::from(rhlp)), ("piecewise", Model::from(pw))] {
        let json = dir.join(format!("{name}.json"));
        write_model(&json, &model)?;
        let back = read_model(&json)?;
        assert_eq!(back, model);
        let plot = dir.join(format!("{name}_plot.tsv"));
        emit_plot_data(&back, &curves, &plot)?;
        println!("{name}: model {}, plot {}", json.display(), plot.display());
    }
    println!("curves: {}", csv.display());
    Ok(())
}
