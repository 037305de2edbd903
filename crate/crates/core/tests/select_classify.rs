mod common;

use common::*;
use proptest::prelude::*;
use regimecurve::classify::{train, train_labeled, ClassEntry, ClassModel, Classifier, Family, TrainSpec};
use regimecurve::select::{best_cell, bic, bic_value, grid_select, n_params, BicRow};
use regimecurve::simulate::{sample_rhlp, SimSpec};
use regimecurve::{fit_em, CurveSet, EmConfig, Error, GateWeights, PolyRegime, RhlpModel, TimeGrid};

fn constant_spec(level: f64, n: usize, seed: u64) -> SimSpec {
    SimSpec {
        p: 0,
        betas: vec![vec![level]],
        gate: GateWeights::zeros(1),
        sigmas: vec![1.0],
        n,
        m: 30,
        t_start: 0.0,
        t_end: 1.0,
        seed,
    }
}

fn row(k: usize, p: usize, bic: f64) -> BicRow {
    BicRow {
        k,
        p,
        loglik: 0.0,
        nu: n_params(k, p),
        bic,
    }
}

#[test]
fn bic_is_loglik_minus_half_penalty() {
    let curves = random_curves(&mut rng(31), 4, 25);
    let cfg = EmConfig {
        restarts: 2,
        ..EmConfig::default()
    };
    for (k, p) in [(1, 0), (2, 1), (3, 2)] {
        let (model, _) = fit_em(&curves, k, p, &cfg).unwrap();
        let nu = (k * (p + 1) + k + 2 * (k - 1)) as f64;
        let oracle = model.loglik - nu * (100f64).ln() / 2.0;
        assert_rel(bic(&model, &curves).unwrap(), oracle, 1e-12);
        assert_rel(bic_value(model.loglik, k, p, 4, 25), oracle, 1e-12);
    }
}

#[test]
fn grid_rows_follow_the_definition() {
    let curves = random_curves(&mut rng(32), 3, 20);
    let cfg = EmConfig {
        restarts: 2,
        ..EmConfig::default()
    };
    let report = grid_select(&curves, 1..=2, 0..=1, &cfg).unwrap();
    assert_eq!(report.rows.len(), 4);
    for r in &report.rows {
        assert_eq!(r.nu, r.k * (r.p + 4) - 2);
        assert_rel(r.bic, r.loglik - r.nu as f64 * (60f64).ln() / 2.0, 1e-12);
    }
    let max = report.rows.iter().map(|r| r.bic).fold(f64::NEG_INFINITY, f64::max);
    let chosen = report.rows.iter().find(|r| (r.k, r.p) == report.best).unwrap();
    assert_eq!(chosen.bic, max);
}

#[test]
fn ties_prefer_fewer_regimes_then_lower_degree() {
    let rows = vec![row(3, 1, -5.0), row(2, 2, -5.0), row(2, 1, -5.0), row(1, 3, -6.0)];
    assert_eq!(best_cell(&rows), Some((2, 1)));
    let rows = vec![row(2, 0, -1.0), row(1, 3, -1.0), row(1, 2, -1.0)];
    assert_eq!(best_cell(&rows), Some((1, 2)));
    assert_eq!(best_cell(&[row(4, 4, f64::MIN)]), Some((4, 4)));
    assert_eq!(best_cell(&[]), None);
}

#[test]
fn single_cell_grid_returns_that_cell() {
    let curves = random_curves(&mut rng(33), 2, 15);
    let report = grid_select(&curves, 2..=2, 1..=1, &EmConfig::default()).unwrap();
    assert_eq!(report.best, (2, 1));
    assert_eq!(report.rows.len(), 1);
}

#[test]
fn pure_cubic_selects_one_regime() {
    let spec = SimSpec {
        p: 3,
        betas: vec![vec![1.0, -2.0, 0.5, 0.3]],
        gate: GateWeights::zeros(1),
        sigmas: vec![0.5],
        n: 10,
        m: 50,
        t_start: 0.0,
        t_end: 3.0,
        seed: 5,
    };
    let curves = sample_rhlp(&spec).unwrap().curves;
    let cfg = EmConfig {
        restarts: 3,
        ..EmConfig::default()
    };
    let report = grid_select(&curves, 1..=3, 0..=3, &cfg).unwrap();
    assert_eq!(report.best, (1, 3), "{}", report.to_tsv());
}

fn const_class(label: i64, prior: f64, mean: f64) -> ClassEntry {
    ClassEntry {
        label,
        prior,
        model: ClassModel::Rhlp(RhlpModel {
            grid: TimeGrid::new(vec![0.0, 1.0, 2.0]).unwrap(),
            p: 0,
            gate: GateWeights::zeros(1),
            regimes: vec![PolyRegime {
                beta: vec![mean],
                sigma2: 1.0,
            }],
            loglik: 0.0,
        }),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posteriors_are_bayes_rule(
        means in prop::collection::vec(-5.0f64..5.0, 1..5),
        x in prop::collection::vec(-20.0f64..20.0, 3),
    ) {
        let g = means.len();
        let priors: Vec<f64> = (1..=g).map(|v| v as f64).collect();
        let total: f64 = priors.iter().sum();
        let entries = means
            .iter()
            .enumerate()
            .map(|(i, &mu)| const_class(i as i64 + 1, priors[i] / total, mu))
            .collect();
        let clf = Classifier::new(entries).unwrap();
        let post = clf.class_posteriors(&x);
        prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let scores: Vec<f64> = means
            .iter()
            .enumerate()
            .map(|(i, &mu)| (priors[i] / total).ln() + x.iter().map(|&v| logpdf(v, mu, 1.0)).sum::<f64>())
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = scores.iter().map(|v| (v - max).exp()).sum();
        for (p, sc) in post.iter().zip(&scores) {
            prop_assert!((p - (sc - max).exp() / s).abs() < 1e-12);
        }
        let best = (0..g).max_by(|&a, &b| post[a].total_cmp(&post[b]).then(b.cmp(&a))).unwrap();
        prop_assert_eq!(clf.predict(&x), best as i64 + 1);
    }
}

#[test]
fn separated_classes_are_perfectly_resubstituted() {
    let a = sample_rhlp(&constant_spec(0.0, 20, 1)).unwrap().curves;
    let b = sample_rhlp(&constant_spec(10.0, 20, 2)).unwrap().curves;
    let curves = CurveSet::concat(&[&a, &b]).unwrap();
    let labels: Vec<i64> = [vec![1; 20], vec![2; 20]].concat();
    for family in [Family::Rhlp, Family::Piecewise] {
        let clf = train_labeled(&curves, &labels, &TrainSpec::new(family, 2, 0)).unwrap();
        assert_eq!(clf.predict_all(&curves), labels, "{family}");
    }
}

#[test]
fn priors_are_class_proportions() {
    let classes: Vec<(i64, CurveSet)> = [(1, 35), (2, 40), (3, 45)]
        .iter()
        .map(|&(label, n)| (label, sample_rhlp(&constant_spec(label as f64, n, label as u64)).unwrap().curves))
        .collect();
    let clf = train(&classes, &TrainSpec::new(Family::Piecewise, 1, 0)).unwrap();
    let priors: Vec<f64> = clf.classes().iter().map(|c| c.prior).collect();
    for (p, n) in priors.iter().zip([35.0, 40.0, 45.0]) {
        assert_rel(*p, n / 120.0, 1e-12);
    }
}

#[test]
fn class_fit_failure_names_the_label() {
    let classes = vec![
        (7, sample_rhlp(&constant_spec(0.0, 3, 1)).unwrap().curves),
        (9, sample_rhlp(&constant_spec(1.0, 3, 2)).unwrap().curves),
    ];
    let err = train(&classes, &TrainSpec::new(Family::Piecewise, 31, 0)).unwrap_err();
    assert!(matches!(err, Error::ClassFit { label: 7, .. }), "{err}");
    assert!(err.to_string().contains("class 7"));
}
