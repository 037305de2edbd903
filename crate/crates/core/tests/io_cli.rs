mod common;

use std::fs;
use std::path::Path;

use common::*;
use regimecurve::classify::{train_labeled, Family, TrainSpec};
use regimecurve::cli::main_with_args;
use regimecurve::io::{
    format_curves, format_model, parse_curves, parse_model, plot_table, read_curves, read_labels, read_model,
    write_curves, write_model, Model,
};
use regimecurve::simulate::{sample_rhlp, waveform, SimSpec};
use regimecurve::{fisher_segment, fit_em, CurveSet, EmConfig, Error, GateWeights};

fn cli(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("regimecurve").chain(args.iter().copied()))
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let mut r = rng(51);
    let curves = random_curves(&mut r, 4, 9);
    let scaled: Vec<f64> = curves.values().iter().enumerate().map(|(i, v)| v * 10f64.powi(i as i32 % 7 - 3)).collect();
    let curves = CurveSet::new(curves.grid().clone(), scaled).unwrap();
    let back = parse_curves(&format_curves(&curves), Path::new("mem.csv")).unwrap();
    assert_eq!(back.times(), curves.times());
    assert!(back.values().iter().zip(curves.values()).all(|(a, b)| a.to_bits() == b.to_bits()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    write_curves(&path, &curves).unwrap();
    assert_eq!(read_curves(&path).unwrap(), curves);
}

#[test]
fn single_regime_model_round_trip() {
    let spec = SimSpec {
        p: 1,
        betas: vec![vec![0.5, 2.0]],
        gate: GateWeights::zeros(1),
        sigmas: vec![0.3],
        n: 5,
        m: 20,
        t_start: 0.0,
        t_end: 1.0,
        seed: 1,
    };
    let curves = sample_rhlp(&spec).unwrap().curves;
    let (model, _) = fit_em(&curves, 1, 1, &EmConfig::default()).unwrap();
    let model = Model::Rhlp(model);
    let text = format_model(&model);
    assert_eq!(parse_model(&text, Path::new("m.json")).unwrap(), model);
}

#[test]
fn three_class_classifier_round_trip() {
    let (curves, labels) = waveform(10, 2).unwrap();
    for family in [Family::Piecewise, Family::Rhlp] {
        let clf = train_labeled(&curves, &labels, &TrainSpec::new(family, 2, 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.json");
        write_model(&path, &Model::Classifier(clf.clone())).unwrap();
        let Model::Classifier(back) = read_model(&path).unwrap() else {
            panic!("expected a classifier");
        };
        assert_eq!(back, clf);
        assert_eq!(back.classes().len(), 3);
        assert_eq!(back.predict_all(&curves), clf.predict_all(&curves));
    }
}

#[test]
fn missing_field_is_reported_with_its_path() {
    let curves = random_curves(&mut rng(52), 2, 10);
    let (model, _) = fit_em(&curves, 2, 0, &EmConfig { restarts: 1, ..EmConfig::default() }).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&format_model(&Model::Rhlp(model))).unwrap();
    value.as_object_mut().unwrap().remove("sigma2");
    let err = parse_model(&value.to_string(), Path::new("bad.json")).unwrap_err();
    assert!(matches!(err, Error::Schema { .. }), "{err}");
    assert!(err.to_string().contains("sigma2"), "{err}");
}

#[test]
fn malformed_csv_points_at_the_cell() {
    let err = parse_curves("0,1,2\n1,2,x\n", Path::new("bad.csv")).unwrap_err();
    match err {
        Error::Parse { line, column, .. } => assert_eq!((line, column), (2, 3)),
        other => panic!("{other}"),
    }
}

#[test]
fn plot_tables_have_expected_columns() {
    let curves = random_curves(&mut rng(53), 3, 12);
    let (rhlp, _) = fit_em(&curves, 3, 1, &EmConfig { restarts: 1, ..EmConfig::default() }).unwrap();
    let table = plot_table(&Model::Rhlp(rhlp), &curves).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "t\tmean\tfit\tpi_1\tpi_2\tpi_3");
    assert_eq!(lines.clone().count(), 12);
    for line in lines {
        let cells: Vec<f64> = line.split('\t').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells.len(), 6);
        assert!((cells[3..].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    let pw = fisher_segment(&curves, 3, 1).unwrap();
    let gamma = pw.gamma.clone();
    let table = plot_table(&Model::Piecewise(pw), &curves).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "t\tmean\tfit\tsegment");
    for (j, line) in rows[1..].iter().enumerate() {
        let seg: usize = line.rsplit('\t').next().unwrap().parse().unwrap();
        assert!(j >= gamma[seg - 1] && j < gamma[seg], "point {j} in segment {seg}");
    }
}

#[test]
fn cli_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let curves = p(d, "curves.csv");
    assert_eq!(cli(&["simulate", "--n", "8", "--m", "40", "--output", &curves, "--truth-out", &p(d, "truth.tsv")]), 0);
    assert_eq!(read_curves(&curves).unwrap().n(), 8);
    assert!(fs::read_to_string(p(d, "truth.tsv")).unwrap().starts_with("t\tmean\tz\n"));

    let fit_model = p(d, "rhlp.json");
    assert_eq!(
        cli(&[
            "fit", "--input", &curves, "--K", "3", "--p", "2", "--restarts", "2", "--model-out", &fit_model,
            "--output", &p(d, "fit.json"), "--emit-plot", &p(d, "plot.tsv"),
        ]),
        0
    );
    assert!(matches!(read_model(&fit_model).unwrap(), Model::Rhlp(m) if m.k() == 3));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(p(d, "fit.json")).unwrap()).unwrap();
    assert_eq!(summary["K"], 3);
    assert!(fs::read_to_string(p(d, "plot.tsv")).unwrap().starts_with("t\tmean\tfit\tpi_1"));

    let seg_model = p(d, "pw.json");
    assert_eq!(cli(&["segment", "--input", &curves, "--K", "3", "--p", "2", "--model-out", &seg_model]), 0);
    assert!(matches!(read_model(&seg_model).unwrap(), Model::Piecewise(m) if m.gamma.len() == 4));

    let bic = p(d, "bic.tsv");
    assert_eq!(cli(&["select", "--input", &curves, "--K-range", "1..2", "--p-range", "0..1", "--restarts", "1", "--output", &bic]), 0);
    let text = fs::read_to_string(&bic).unwrap();
    assert!(text.starts_with("K\tp\tloglik\tnu\tbic\n"));
    assert_eq!(text.lines().count(), 5);

    let wave = p(d, "wave.csv");
    let wave_labels = p(d, "wave_labels.csv");
    assert_eq!(cli(&["simulate", "--scenario", "waveform", "--n", "10", "--output", &wave, "--labels", &wave_labels]), 0);
    assert_eq!(read_labels(&wave_labels).unwrap().len(), 30);

    let clf = p(d, "clf.json");
    let preds = p(d, "pred.csv");
    assert_eq!(
        cli(&[
            "classify", "--input", &wave, "--labels", &wave_labels, "--family", "piecewise", "--K", "2", "--p", "1",
            "--model-out", &clf, "--output", &preds,
        ]),
        0
    );
    let first = fs::read_to_string(&preds).unwrap();
    assert!(first.starts_with("label,posterior_1,posterior_2,posterior_3\n"));
    assert_eq!(first.lines().count(), 31);
    let preds2 = p(d, "pred2.csv");
    assert_eq!(cli(&["classify", "--input", &wave, "--model-in", &clf, "--output", &preds2]), 0);
    assert_eq!(fs::read_to_string(&preds2).unwrap(), first);

    let cv = p(d, "cv.json");
    assert_eq!(
        cli(&[
            "cv", "--input", &wave, "--labels", &wave_labels, "--family", "piecewise", "--K", "2", "--p", "1",
            "--folds", "3", "--output", &cv,
        ]),
        0
    );
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&cv).unwrap()).unwrap();
    assert!(report["mean_error"].as_f64().unwrap() <= 1.0);

    let bench = p(d, "bench.tsv");
    assert_eq!(
        cli(&["bench", "--n", "5", "--m", "30,60", "--family", "piecewise", "--repetitions", "1", "--output", &bench]),
        0
    );
    assert_eq!(fs::read_to_string(&bench).unwrap().lines().count(), 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["--help"]), 0);
    assert_eq!(cli(&["fit", "--help"]), 0);
    assert_eq!(cli(&[]), 2);
    assert_eq!(cli(&["frobnicate"]), 2);
    assert_eq!(cli(&["fit", "--input", "x.csv", "--K", "0", "--p", "1"]), 2);
    assert_eq!(cli(&["select", "--input", "x.csv", "--K-range", "banana"]), 2);
    let missing = p(dir.path(), "missing.csv");
    assert_eq!(cli(&["fit", "--input", &missing, "--K", "2", "--p", "1"]), 1);
    let bad = p(dir.path(), "bad.csv");
    fs::write(&bad, "0,1\n1,zzz\n").unwrap();
    assert_eq!(cli(&["segment", "--input", &bad, "--K", "1", "--p", "0"]), 1);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for tag in ["a", "b"] {
        let curves = p(d, &format!("{tag}.csv"));
        assert_eq!(cli(&["--seed", "7", "simulate", "--n", "5", "--m", "30", "--output", &curves]), 0);
        assert_eq!(
            cli(&["--seed", "7", "fit", "--input", &curves, "--K", "2", "--p", "1", "--restarts", "2", "--model-out", &p(d, &format!("{tag}.json"))]),
            0
        );
    }
    assert_eq!(fs::read(p(d, "a.csv")).unwrap(), fs::read(p(d, "b.csv")).unwrap());
    assert_eq!(fs::read(p(d, "a.json")).unwrap(), fs::read(p(d, "b.json")).unwrap());
    let other = p(d, "c.csv");
    assert_eq!(cli(&["--seed", "8", "simulate", "--n", "5", "--m", "30", "--output", &other]), 0);
    assert_ne!(fs::read(p(d, "a.csv")).unwrap(), fs::read(&other).unwrap());
}
