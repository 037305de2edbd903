//! Evaluation harness: approximation error against the true mean curve,
//! stratified k-fold cross-validation, and runtime benchmarks.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{train_labeled, Family, TrainSpec};
use crate::curves::CurveSet;
use crate::error::{Error, Result};
use crate::piecewise::{fisher_segment, piecewise_approximation};
use crate::rhlp::{fit_em, rhlp_approximation, EmConfig};
use crate::simulate::{sample_rhlp, three_regime_spec};

/// `(1/m) Σ_j (μ_j − x̂_j)²` for one fitted curve shared by every curve of the sample.
pub fn approximation_mse(true_mean: &[f64], fitted: &[f64]) -> Result<f64> {
    if true_mean.len() != fitted.len() || true_mean.is_empty() {
        return Err(Error::domain(format!(
            "length mismatch: true mean has {} points, fit has {}",
            true_mean.len(),
            fitted.len()
        )));
    }
    Ok(true_mean
        .iter()
        .zip(fitted)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / true_mean.len() as f64)
}

/// `(1/(nm)) Σ_i Σ_j (μ_j − x̂_ij)²` for per-curve approximations.
pub fn approximation_mse_curves(true_mean: &[f64], fitted: &CurveSet) -> Result<f64> {
    let mut total = 0.0;
    for row in fitted.rows() {
        total += approximation_mse(true_mean, row)?;
    }
    Ok(total / fitted.n() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    /// Misclassification rate of each fold.
    pub folds: Vec<f64>,
    pub mean_error: f64,
    /// Sample standard deviation across folds.
    pub std_error: f64,
}

impl CvReport {
    pub fn from_folds(k: usize, seed: u64, folds: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&folds);
        Self {
            k,
            seed,
            folds,
            mean_error: mean,
            std_error: std,
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("fold\terror\n");
        for (f, e) in self.folds.iter().enumerate() {
            out.push_str(&format!("{}\t{}\n", f + 1, e));
        }
        out.push_str(&format!("mean\t{}\nstd\t{}\n", self.mean_error, self.std_error));
        out
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Stratified fold assignment: seeded shuffle within each class, then round-robin.
pub fn stratified_folds(labels: &[i64], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::domain(format!("need at least 2 folds, got {k}")));
    }
    let mut by_class: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (label, mut idx) in by_class {
        if idx.len() < k {
            return Err(Error::domain(format!(
                "class {label} has {} curves, fewer than the {k} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Cross-validates an arbitrary train-then-predict procedure.
///
/// `fit_predict(train_curves, train_labels, test_curves)` must return one label per test curve.
pub fn cross_validate<F>(curves: &CurveSet, labels: &[i64], k: usize, seed: u64, fit_predict: F) -> Result<CvReport>
where
    F: Fn(&CurveSet, &[i64], &CurveSet) -> Result<Vec<i64>> + Sync,
{
    if labels.len() != curves.n() {
        return Err(Error::domain(format!(
            "{} labels for {} curves",
            labels.len(),
            curves.n()
        )));
    }
    let folds = stratified_folds(labels, k, seed)?;
    let errors: Vec<Result<f64>> = folds
        .par_iter()
        .map(|test| {
            let mut in_test = vec![false; curves.n()];
            test.iter().for_each(|&i| in_test[i] = true);
            let train: Vec<usize> = (0..curves.n()).filter(|&i| !in_test[i]).collect();
            let train_labels: Vec<i64> = train.iter().map(|&i| labels[i]).collect();
            let predicted = fit_predict(&curves.select(&train)?, &train_labels, &curves.select(test)?)?;
            let wrong = test
                .iter()
                .zip(&predicted)
                .filter(|(&i, &p)| labels[i] != p)
                .count();
            Ok(wrong as f64 / test.len() as f64)
        })
        .collect();
    Ok(CvReport::from_folds(k, seed, errors.into_iter().collect::<Result<_>>()?))
}

/// Stratified k-fold misclassification rate of the MAP classifier built on `spec`.
pub fn kfold_cv(curves: &CurveSet, labels: &[i64], k: usize, spec: &TrainSpec, seed: u64) -> Result<CvReport> {
    cross_validate(curves, labels, k, seed, |train, train_labels, test| {
        Ok(train_labeled(train, train_labels, spec)?.predict_all(test))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Family,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub p: usize,
    /// Mean wall time per fit over the timed repetitions.
    pub seconds: f64,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn seconds(&self, method: Family, n: usize, m: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.n == n && r.m == m)
            .map(|r| r.seconds)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("method\tn\tm\tK\tp\tseconds\trepetitions\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.method, r.n, r.m, r.k, r.p, r.seconds, r.repetitions
            ));
        }
        out
    }
}

/// Settings of a runtime benchmark on data drawn from the three-regime quadratic scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// `(n, m)` cells.
    pub cells: Vec<(usize, usize)>,
    pub methods: Vec<Family>,
    pub k: usize,
    pub p: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub em: EmConfig,
}

/// Wall-clock time per fit for every `(method, n, m)` cell, measured on a single thread.
///
/// Each repetition fits freshly simulated data; with three or more
/// repetitions the first one is a discarded warm-up.
pub fn runtime_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.cells.is_empty() || cfg.methods.is_empty() {
        return Err(Error::domain("benchmark grid is empty"));
    }
    if cfg.repetitions == 0 {
        return Err(Error::domain("repetitions must be >= 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::domain(format!("cannot build benchmark thread pool: {e}")))?;
    pool.install(|| {
        let mut rows = Vec::new();
        for &(n, m) in &cfg.cells {
            for &method in &cfg.methods {
                let mut times = Vec::with_capacity(cfg.repetitions);
                for rep in 0..cfg.repetitions {
                    let sim = sample_rhlp(&three_regime_spec(n, m)?.with_seed(cfg.seed + rep as u64))?;
                    let start = Instant::now();
                    match method {
                        Family::Piecewise => {
                            std::hint::black_box(fisher_segment(&sim.curves, cfg.k, cfg.p)?);
                        }
                        Family::Rhlp => {
                            std::hint::black_box(fit_em(&sim.curves, cfg.k, cfg.p, &cfg.em)?);
                        }
                    }
                    times.push(start.elapsed().as_secs_f64());
                }
                let timed = if times.len() >= 3 { &times[1..] } else { &times[..] };
                rows.push(BenchRow {
                    method,
                    n,
                    m,
                    k: cfg.k,
                    p: cfg.p,
                    seconds: (timed.iter().sum::<f64>() / timed.len() as f64).max(f64::MIN_POSITIVE),
                    repetitions: timed.len(),
                });
            }
        }
        Ok(BenchReport { rows })
    })
}

/// Approximation MSE of both estimators on one simulated sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxErrors {
    pub rhlp: f64,
    pub piecewise: f64,
}

/// Fits both models with `K` regimes of degree `p` and scores each against the true mean curve.
pub fn compare_approximations(
    curves: &CurveSet,
    true_mean: &[f64],
    k: usize,
    p: usize,
    em: &EmConfig,
) -> Result<ApproxErrors> {
    let (rhlp, _) = fit_em(curves, k, p, em)?;
    let pw = fisher_segment(curves, k, p)?;
    Ok(ApproxErrors {
        rhlp: approximation_mse(true_mean, &rhlp_approximation(&rhlp))?,
        piecewise: approximation_mse(true_mean, &piecewise_approximation(&pw))?,
    })
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut s = 0;
        while s < idx.len() {
            let mut e = s;
            while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[s]] {
                e += 1;
            }
            let avg = (s + e) as f64 / 2.0 + 1.0;
            for &i in &idx[s..=e] {
                r[i] = avg;
            }
            s = e + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, _) = mean_std(&rx);
    let (my, _) = mean_std(&ry);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
