//! Piecewise polynomial regression over a set of curves, segmented jointly by
//! Fisher's dynamic-programming algorithm.
//!
//! A segmentation `γ = (0 = γ₁ < … < γ_{K+1} = m)` splits the time indexes into
//! half-open runs `(γ_k, γ_{k+1}]`, each carrying its own polynomial and noise
//! variance. The segmentation cost
//!
//! ```text
//! C(γ) = Σ_k [ SSR_k / σ̂²_k + n·m_k·log σ̂²_k ]
//! ```
//!
//! is additive over segments, so the global optimum for a fixed `K` is found
//! exactly by dynamic programming over the one-segment cost table `C₁(a, b)`.
//!
//! `C₁` is filled from per-time-point sufficient statistics: the residual of the
//! stacked `n·(b−a)` point regression splits into the within-time-point scatter
//! `Σ_i (x_ij − x̄_j)²` and an `n`-weighted regression of the mean curve, which is
//! grown one row at a time with Givens rotations. Every table entry costs
//! `O(p²)` after an `O(nm)` pass over the data.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{design_matrix, log_normal, CurveSet, DesignMatrix, PolyRegime, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::{least_squares, GivensAccumulator};

/// Optimal single-segment fit on the points `(a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFit {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    /// Residual sum of squares over every curve of the segment.
    pub ssr: f64,
    /// `SSR / σ̂² + n(b−a) log σ̂²`.
    pub cost: f64,
}

/// Variance and cost of a segment with residual sum `ssr` over `count` observations.
pub(crate) fn segment_cost(ssr: f64, count: usize, floor: f64) -> (f64, f64) {
    let count = count as f64;
    let sigma2 = (ssr / count).max(floor);
    (sigma2, ssr / sigma2 + count * sigma2.ln())
}

/// Least-squares polynomial fit of all curves on the time indexes `(a, b]`.
pub fn segment_fit(curves: &CurveSet, a: usize, b: usize, p: usize) -> Result<SegmentFit> {
    segment_fit_with_floor(curves, a, b, p, curves.variance_floor())
}

pub(crate) fn segment_fit_with_floor(
    curves: &CurveSet,
    a: usize,
    b: usize,
    p: usize,
    floor: f64,
) -> Result<SegmentFit> {
    let m = curves.m();
    if a >= b || b > m {
        return Err(Error::domain(format!(
            "segment ({a}, {b}] is empty or exceeds the {m} available points"
        )));
    }
    let n = curves.n();
    let len = b - a;
    let t = &curves.times()[a..b];
    let phi = design_matrix(t, p);
    let stacked = DMatrix::from_fn(n * len, p + 1, |r, d| phi.get(r % len, d));
    let y = DVector::from_iterator(
        n * len,
        curves.rows().flat_map(|row| row[a..b].iter().copied()),
    );
    let sol = least_squares(&stacked, &y);
    if sol.ridged {
        log::debug!("segment ({a}, {b}] design is rank deficient; ridge-regularized");
    }
    let beta = sol.beta;
    let fitted = phi.eval_all(&beta);
    let ssr: f64 = curves
        .rows()
        .map(|row| {
            row[a..b]
                .iter()
                .zip(&fitted)
                .map(|(x, f)| (x - f).powi(2))
                .sum::<f64>()
        })
        .sum();
    let (sigma2, cost) = segment_cost(ssr, n * len, floor);
    Ok(SegmentFit {
        beta,
        sigma2,
        ssr,
        cost,
    })
}

/// Constraints on admissible segmentations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentOptions {
    /// Minimum number of time points per segment.
    pub min_len: usize,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self { min_len: 1 }
    }
}

/// One-segment costs, optimal `k`-segment costs of every prefix, and split points.
#[derive(Debug, Clone)]
pub struct CostTables {
    m: usize,
    k: usize,
    c1: Vec<f64>,
    /// `prefix[k-1][b]`: optimal cost of the points `(0, b]` in `k` segments.
    prefix: Vec<Vec<f64>>,
    /// `split[k-1][b]`: last split `h` achieving `prefix[k-1][b]`.
    split: Vec<Vec<usize>>,
}

impl CostTables {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn max_segments(&self) -> usize {
        self.k
    }

    /// `C₁(a, b)` for `0 ≤ a < b ≤ m`.
    pub fn c1(&self, a: usize, b: usize) -> f64 {
        assert!(a < b && b <= self.m, "C1({a},{b}) is undefined");
        self.c1[a * (self.m + 1) + b]
    }

    /// Optimal cost of splitting the first `b` points into `k` segments
    /// (`+∞` when no admissible split exists).
    pub fn prefix_cost(&self, k: usize, b: usize) -> f64 {
        self.prefix[k - 1][b]
    }

    /// Optimal cost of the whole curve set in `k` segments.
    pub fn optimal_cost(&self, k: usize) -> f64 {
        self.prefix_cost(k, self.m)
    }

    /// Recovers the optimal bounds `(0, γ₂, …, m)` for `k` segments.
    pub fn backtrack(&self, k: usize) -> Vec<usize> {
        let mut gamma = vec![0; k + 1];
        gamma[k] = self.m;
        let mut b = self.m;
        for level in (1..k).rev() {
            b = self.split[level][b];
            gamma[level] = b;
        }
        gamma
    }
}

/// Within-time-point scatter prefix sums and the mean curve.
fn time_point_stats(curves: &CurveSet) -> (Vec<f64>, Vec<f64>) {
    let m = curves.m();
    let mean = curves.mean_curve();
    let mut within = vec![0.0; m + 1];
    for j in 0..m {
        let s: f64 = curves.rows().map(|row| (row[j] - mean[j]).powi(2)).sum();
        within[j + 1] = within[j] + s;
    }
    (mean, within)
}

/// Steps 1 and 2: the one-segment cost table and the optimal-prefix recursion
/// for up to `k` segments.
pub fn cost_tables(
    curves: &CurveSet,
    k: usize,
    p: usize,
    opts: SegmentOptions,
) -> Result<CostTables> {
    let m = curves.m();
    let min_len = opts.min_len.max(1);
    if k == 0 {
        return Err(Error::domain("K must be >= 1"));
    }
    if k * min_len > m {
        return Err(Error::domain(format!(
            "cannot split {m} points into {k} segments of at least {min_len} points"
        )));
    }
    let n = curves.n();
    let floor = curves.variance_floor();
    let (mean, within) = time_point_stats(curves);
    let phi: DesignMatrix = design_matrix(curves.times(), p);
    let sqrt_n = (n as f64).sqrt();
    let width = m + 1;

    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|a| {
            let mut out = vec![f64::NAN; width];
            let mut acc = GivensAccumulator::new(p + 1);
            let mut x = vec![0.0; p + 1];
            for b in a + 1..=m {
                let j = b - 1;
                for (d, xd) in x.iter_mut().enumerate() {
                    *xd = sqrt_n * phi.get(j, d);
                }
                acc.push(&x, sqrt_n * mean[j]);
                let ssr = (within[b] - within[a]) + acc.rss();
                out[b] = segment_cost(ssr, n * (b - a), floor).1;
            }
            out
        })
        .collect();
    let mut c1 = Vec::with_capacity(width * width);
    for row in rows {
        c1.extend(row);
    }
    c1.extend(std::iter::repeat_n(f64::NAN, width));

    let mut prefix = vec![vec![f64::INFINITY; width]; k];
    let mut split = vec![vec![0usize; width]; k];
    prefix[0][min_len..=m].copy_from_slice(&c1[min_len..=m]);
    for level in 1..k {
        let (done, rest) = prefix.split_at_mut(level);
        let prev = &done[level - 1];
        let cur = &mut rest[0];
        let lowest_b = (level + 1) * min_len;
        for b in lowest_b..=m {
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for h in level * min_len..=b - min_len {
                let v = prev[h] + c1[h * width + b];
                // strict comparison keeps the smallest h on ties
                if v < best {
                    best = v;
                    arg = h;
                }
            }
            cur[b] = best;
            split[level][b] = arg;
        }
    }
    Ok(CostTables {
        m,
        k,
        c1,
        prefix,
        split,
    })
}

/// Piecewise polynomial regression model on a fixed time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseModel {
    pub grid: TimeGrid,
    pub p: usize,
    /// Segment bounds `(0, γ₂, …, γ_K, m)`.
    pub gamma: Vec<usize>,
    pub regimes: Vec<PolyRegime>,
    /// `C(γ)` of the fitted segmentation on its training data.
    pub cost: f64,
    pub loglik: f64,
}

impl PiecewiseModel {
    pub fn k(&self) -> usize {
        self.regimes.len()
    }

    pub fn m(&self) -> usize {
        self.grid.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.regimes.len();
        if k == 0 {
            return Err(Error::domain("piecewise model has no segments"));
        }
        if self.gamma.len() != k + 1 {
            return Err(Error::domain(format!(
                "gamma has {} entries, expected K+1 = {}",
                self.gamma.len(),
                k + 1
            )));
        }
        if self.gamma[0] != 0 || self.gamma[k] != self.m() {
            return Err(Error::domain(format!(
                "gamma must start at 0 and end at m = {}",
                self.m()
            )));
        }
        if self.gamma.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("gamma must be strictly increasing"));
        }
        for (r, regime) in self.regimes.iter().enumerate() {
            if regime.beta.len() != self.p + 1 {
                return Err(Error::domain(format!(
                    "segment {} has {} coefficients, expected p+1 = {}",
                    r + 1,
                    regime.beta.len(),
                    self.p + 1
                )));
            }
            if !(regime.sigma2 > 0.0) {
                return Err(Error::domain(format!(
                    "segment {} has non-positive variance",
                    r + 1
                )));
            }
        }
        Ok(())
    }

    /// Segment label (1-based) of every time point.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.m()];
        for k in 0..self.k() {
            for l in &mut labels[self.gamma[k]..self.gamma[k + 1]] {
                *l = k + 1;
            }
        }
        labels
    }

    /// Per-point means and variances selected by the segmentation.
    fn point_params(&self) -> Vec<(f64, f64)> {
        let phi = design_matrix(self.grid.as_slice(), self.p);
        self.labels()
            .into_iter()
            .enumerate()
            .map(|(j, k)| {
                let r = &self.regimes[k - 1];
                (phi.eval(&r.beta, j), r.sigma2)
            })
            .collect()
    }

    /// Log-density of a single curve.
    pub fn curve_loglik(&self, x: &[f64]) -> f64 {
        self.point_params()
            .iter()
            .zip(x)
            .map(|(&(mu, var), &v)| log_normal(v, mu, var))
            .sum()
    }
}

/// Globally optimal `K`-segment fit with one-point minimum segments.
pub fn fisher_segment(curves: &CurveSet, k: usize, p: usize) -> Result<PiecewiseModel> {
    fisher_segment_with(curves, k, p, SegmentOptions::default())
}

pub fn fisher_segment_with(
    curves: &CurveSet,
    k: usize,
    p: usize,
    opts: SegmentOptions,
) -> Result<PiecewiseModel> {
    let tables = cost_tables(curves, k, p, opts)?;
    let gamma = tables.backtrack(k);
    let floor = curves.variance_floor();
    let mut regimes = Vec::with_capacity(k);
    let mut cost = 0.0;
    for w in gamma.windows(2) {
        let fit = segment_fit_with_floor(curves, w[0], w[1], p, floor)?;
        cost += fit.cost;
        regimes.push(PolyRegime {
            beta: fit.beta,
            sigma2: fit.sigma2,
        });
    }
    let mut model = PiecewiseModel {
        grid: curves.grid().clone(),
        p,
        gamma,
        regimes,
        cost,
        loglik: 0.0,
    };
    model.loglik = piecewise_loglik(&model, curves)?;
    Ok(model)
}

fn check_grid(model_grid: &TimeGrid, curves: &CurveSet) -> Result<()> {
    if model_grid != curves.grid() {
        return Err(Error::domain(format!(
            "model grid ({} points) does not match the curves grid ({} points)",
            model_grid.len(),
            curves.m()
        )));
    }
    Ok(())
}

/// `Σ_k Σ_i Σ_{j∈I_k} log 𝒩(x_ij; β_kᵀr_j, σ²_k)`.
pub fn piecewise_loglik(model: &PiecewiseModel, curves: &CurveSet) -> Result<f64> {
    check_grid(&model.grid, curves)?;
    let params = model.point_params();
    Ok(curves
        .rows()
        .map(|row| {
            row.iter()
                .zip(&params)
                .map(|(&x, &(mu, var))| log_normal(x, mu, var))
                .sum::<f64>()
        })
        .sum())
}

/// Hard-segmentation curve approximation: `x̂_j = β_{k(j)}ᵀ r_j`.
pub fn piecewise_approximation(model: &PiecewiseModel) -> Vec<f64> {
    model.point_params().into_iter().map(|(mu, _)| mu).collect()
}
