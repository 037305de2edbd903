//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the library's numerics: least squares goes through
//! explicit normal equations solved by Gaussian elimination, densities are
//! written out in closed form, and segmentations are enumerated exhaustively.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regimecurve::{CurveSet, TimeGrid};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

pub fn powers(t: f64, p: usize) -> Vec<f64> {
    (0..=p).map(|d| t.powi(d as i32)).collect()
}

pub fn poly(beta: &[f64], t: f64) -> f64 {
    beta.iter().enumerate().map(|(d, b)| b * t.powi(d as i32)).sum()
}

/// Weighted least squares through the normal equations `XᵀWX β = XᵀWy`.
pub fn wls(rows: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
    let d = rows[0].len();
    let mut a = vec![vec![0.0; d]; d];
    let mut b = vec![0.0; d];
    for ((r, &yy), &ww) in rows.iter().zip(y).zip(w) {
        for i in 0..d {
            b[i] += ww * r[i] * yy;
            for j in 0..d {
                a[i][j] += ww * r[i] * r[j];
            }
        }
    }
    solve(a, b)
}

pub fn ols(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    wls(rows, y, &vec![1.0; y.len()])
}

pub fn logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + (x - mean) * (x - mean) / var)
}

pub fn floor_of(curves: &CurveSet) -> f64 {
    let v = curves.values();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
    1e-8 * if var > 0.0 { var } else { 1.0 }
}

/// Stacked OLS fit of the points `(a, b]` of every curve.
///
/// With fewer than `p + 1` distinct times the degree drops to what the points
/// identify; the residual (and hence the cost) is the same minimum.
pub fn segment_beta(curves: &CurveSet, a: usize, b: usize, p: usize) -> Vec<f64> {
    let t = curves.times();
    let q = p.min(b - a - 1);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for row in curves.rows() {
        for j in a..b {
            rows.push(powers(t[j], q));
            y.push(row[j]);
        }
    }
    let mut beta = ols(&rows, &y);
    beta.resize(p + 1, 0.0);
    beta
}

/// `(β, σ², SSR/σ² + n·len·log σ²)` of one segment.
pub fn segment_oracle(curves: &CurveSet, a: usize, b: usize, p: usize) -> (Vec<f64>, f64, f64) {
    let beta = segment_beta(curves, a, b, p);
    let t = curves.times();
    let ssr: f64 = curves
        .rows()
        .map(|row| (a..b).map(|j| (row[j] - poly(&beta, t[j])).powi(2)).sum::<f64>())
        .sum();
    let count = (curves.n() * (b - a)) as f64;
    let sigma2 = (ssr / count).max(floor_of(curves));
    (beta, sigma2, ssr / sigma2 + count * sigma2.ln())
}

pub fn segmentation_cost(curves: &CurveSet, gamma: &[usize], p: usize) -> f64 {
    gamma.windows(2).map(|w| segment_oracle(curves, w[0], w[1], p).2).sum()
}

/// Every `(0, γ₂, …, γ_K, m)` with non-empty segments.
pub fn segmentations(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 1 {
            cur.push(m);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for next in start + 1..=m - (left - 1) {
            cur.push(next);
            rec(next, m, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, k, &mut vec![0], &mut out);
    out
}

pub fn brute_force_min(curves: &CurveSet, k: usize, p: usize) -> (f64, Vec<usize>) {
    segmentations(curves.m(), k)
        .into_iter()
        .map(|g| (segmentation_cost(curves, &g, p), g))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap()
}

pub fn uniform_grid(m: usize) -> TimeGrid {
    TimeGrid::new((0..m).map(|j| j as f64).collect()).unwrap()
}

/// Curves with a few random level shifts plus Gaussian-ish noise on `t = 0..m-1`.
pub fn random_curves(rng: &mut ChaCha8Rng, n: usize, m: usize) -> CurveSet {
    let levels: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
    let mut values = Vec::with_capacity(n * m);
    for _ in 0..n {
        for l in &levels {
            values.push(l + rng.random_range(-1.0..1.0));
        }
    }
    CurveSet::new(uniform_grid(m), values).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn assert_rel(a: f64, b: f64, tol: f64) {
    assert!(rel_err(a, b) <= tol || (a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
}
