//! Least-squares kernels.
//!
//! Solves go through a Householder QR of the (row-weighted) design. When the
//! triangular factor is numerically singular a ridge of `1e-10 · trace(AᵀA)`
//! is appended as extra rows and the QR is redone.

use nalgebra::{DMatrix, DVector};

const RIDGE_RATIO: f64 = 1e-10;

#[derive(Debug, Clone)]
pub(crate) struct LsSolution {
    pub beta: Vec<f64>,
    pub ridged: bool,
}

fn rank_deficient(r: &DMatrix<f64>) -> bool {
    let d = r.ncols();
    if r.nrows() < d {
        return true;
    }
    let diag: Vec<f64> = (0..d).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let tol = max * f64::EPSILON * (r.nrows().max(d) as f64) * 10.0;
    max == 0.0 || diag.iter().any(|&v| v <= tol)
}

fn qr_solve(a: DMatrix<f64>, y: &DVector<f64>) -> Option<Vec<f64>> {
    let qr = a.qr();
    let r = qr.r();
    if rank_deficient(&r) {
        return None;
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty).map(|b| b.iter().copied().collect())
}

/// `argmin ‖Aβ − y‖²`.
pub(crate) fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>) -> LsSolution {
    if let Some(beta) = qr_solve(a.clone(), y) {
        return LsSolution {
            beta,
            ridged: false,
        };
    }
    let (rows, d) = a.shape();
    let lambda = RIDGE_RATIO * a.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut aug = DMatrix::zeros(rows + d, d);
    aug.view_mut((0, 0), (rows, d)).copy_from(a);
    for i in 0..d {
        aug[(rows + i, i)] = lambda.sqrt();
    }
    let mut yaug = DVector::zeros(rows + d);
    yaug.rows_mut(0, rows).copy_from(y);
    let beta = qr_solve(aug, &yaug).unwrap_or_else(|| vec![0.0; d]);
    LsSolution { beta, ridged: true }
}

/// `argmin Σ_r w_r (a_rᵀβ − y_r)²` with non-negative weights; zero-weight rows are dropped.
pub(crate) fn weighted_least_squares(
    a: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
) -> LsSolution {
    let keep: Vec<usize> = (0..a.nrows()).filter(|&r| w[r] > 0.0).collect();
    let d = a.ncols();
    let aw = DMatrix::from_fn(keep.len(), d, |r, c| w[keep[r]].sqrt() * a[(keep[r], c)]);
    let yw = DVector::from_iterator(keep.len(), keep.iter().map(|&r| w[r].sqrt() * y[r]));
    least_squares(&aw, &yw)
}

/// Row-by-row QR via Givens rotations, tracking the minimal residual sum of squares.
///
/// Rows that the current factor cannot absorb leave a residual whose square is
/// added to `rss`; while fewer than `d` independent rows have been seen the
/// residual stays exactly zero.
#[derive(Debug, Clone)]
pub(crate) struct GivensAccumulator {
    d: usize,
    r: Vec<f64>,
    qty: Vec<f64>,
    filled: Vec<bool>,
    rss: f64,
    row: Vec<f64>,
}

impl GivensAccumulator {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            r: vec![0.0; d * d],
            qty: vec![0.0; d],
            filled: vec![false; d],
            rss: 0.0,
            row: vec![0.0; d],
        }
    }

    pub fn rss(&self) -> f64 {
        self.rss
    }

    pub fn push(&mut self, x: &[f64], mut y: f64) {
        let d = self.d;
        self.row.copy_from_slice(x);
        for i in 0..d {
            let xi = self.row[i];
            if xi == 0.0 {
                continue;
            }
            if !self.filled[i] {
                self.r[i * d + i..i * d + d].copy_from_slice(&self.row[i..]);
                self.qty[i] = y;
                self.filled[i] = true;
                return;
            }
            let rii = self.r[i * d + i];
            let h = rii.hypot(xi);
            let (c, s) = (rii / h, xi / h);
            for k in i..d {
                let rk = self.r[i * d + k];
                let xk = self.row[k];
                self.r[i * d + k] = c * rk + s * xk;
                self.row[k] = -s * rk + c * xk;
            }
            let q = self.qty[i];
            self.qty[i] = c * q + s * y;
            y = -s * q + c * y;
        }
        self.rss += y * y;
    }
}

/// Solves `A x = b` for symmetric positive-definite `A`, adding diagonal damping
/// when the Cholesky factorization fails. Returns the solution and whether damping was needed.
pub(crate) fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>, damping: f64) -> Option<(DVector<f64>, bool)> {
    if let Some(ch) = a.clone().cholesky() {
        return Some((ch.solve(b), false));
    }
    let mut damp = damping;
    for _ in 0..8 {
        let mut ad = a.clone();
        for i in 0..ad.nrows() {
            ad[(i, i)] += damp;
        }
        if let Some(ch) = ad.cholesky() {
            return Some((ch.solve(b), true));
        }
        damp *= 100.0;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit_recovers_coefficients() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let a = DMatrix::from_fn(4, 2, |j, d| f64::powi(t[j], d as i32));
        let y = DVector::from_iterator(4, t.iter().map(|v| 1.0 + 2.0 * v));
        let s = least_squares(&a, &y);
        assert!(!s.ridged);
        assert!((s.beta[0] - 1.0).abs() < 1e-12 && (s.beta[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn underdetermined_falls_back_to_ridge() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let y = DVector::from_vec(vec![5.0]);
        let s = least_squares(&a, &y);
        assert!(s.ridged);
        let fit = s.beta[0] + 2.0 * s.beta[1];
        assert!((fit - 5.0).abs() < 1e-6);
    }

    #[test]
    fn givens_rss_matches_qr() {
        let t: Vec<f64> = (0..9).map(|j| j as f64 * 0.4).collect();
        let y: Vec<f64> = t.iter().map(|v| (3.0 * v).sin() + v).collect();
        let mut acc = GivensAccumulator::new(3);
        for (j, tj) in t.iter().enumerate() {
            acc.push(&[1.0, *tj, tj * tj], y[j]);
            let rows = j + 1;
            let a = DMatrix::from_fn(rows, 3, |r, d| t[r].powi(d as i32));
            let yy = DVector::from_column_slice(&y[..rows]);
            let beta = least_squares(&a, &yy).beta;
            let rss: f64 = (0..rows)
                .map(|r| (y[r] - (beta[0] + beta[1] * t[r] + beta[2] * t[r] * t[r])).powi(2))
                .sum();
            if rows <= 3 {
                assert_eq!(acc.rss(), 0.0);
            } else {
                assert!((acc.rss() - rss).abs() < 1e-10 * (1.0 + rss), "{} vs {}", acc.rss(), rss);
            }
        }
    }

    #[test]
    fn weighted_matches_scaled_rows() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        let a = DMatrix::from_fn(5, 2, |j, d| f64::powi(t[j], d as i32));
        let y = [0.3, 1.1, 1.9, 3.2, 3.9];
        let w = [1.0, 0.0, 2.0, 0.5, 1.0];
        let s = weighted_least_squares(&a, &y, &w);
        // normal equations by hand
        let (mut s00, mut s01, mut s11, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in 0..5 {
            s00 += w[j];
            s01 += w[j] * t[j];
            s11 += w[j] * t[j] * t[j];
            b0 += w[j] * y[j];
            b1 += w[j] * t[j] * y[j];
        }
        let det = s00 * s11 - s01 * s01;
        let e0 = (s11 * b0 - s01 * b1) / det;
        let e1 = (s00 * b1 - s01 * b0) / det;
        assert!((s.beta[0] - e0).abs() < 1e-12 && (s.beta[1] - e1).abs() < 1e-12);
    }
}
