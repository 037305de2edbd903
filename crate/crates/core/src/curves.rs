//! Shared data model: time grids, curve sets, polynomial design matrices and
//! the Gaussian log-density every estimator builds on.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative size of the variance floor with respect to the global variance of the data.
pub const VARIANCE_FLOOR_RATIO: f64 = 1e-8;

pub(crate) const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Strictly increasing sampling instants shared by every curve of a set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    t: Vec<f64>,
}

impl TimeGrid {
    pub fn new(t: Vec<f64>) -> Result<Self> {
        if t.len() < 2 {
            return Err(Error::domain(format!(
                "a time grid needs at least 2 points, got {}",
                t.len()
            )));
        }
        if let Some(j) = t.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("time stamp {j} is not finite")));
        }
        if let Some(j) = t.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::domain(format!(
                "time stamps must be strictly increasing (t[{}] = {} >= t[{}] = {})",
                j,
                t[j],
                j + 1,
                t[j + 1]
            )));
        }
        Ok(Self { t })
    }

    /// `m` equally spaced points from `start` to `end`, both included.
    pub fn uniform(start: f64, end: f64, m: usize) -> Result<Self> {
        if !(start < end) || m < 2 {
            return Err(Error::domain(format!(
                "uniform grid needs start < end and m >= 2 (got [{start}, {end}], m = {m})"
            )));
        }
        let step = (end - start) / (m - 1) as f64;
        let mut t: Vec<f64> = (0..m).map(|j| start + step * j as f64).collect();
        t[m - 1] = end;
        Self::new(t)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.t
    }

    pub fn start(&self) -> f64 {
        self.t[0]
    }

    pub fn end(&self) -> f64 {
        self.t[self.t.len() - 1]
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;

    fn try_from(t: Vec<f64>) -> Result<Self> {
        Self::new(t)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(grid: TimeGrid) -> Self {
        grid.t
    }
}

/// `n` curves observed on one shared [`TimeGrid`], stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    grid: TimeGrid,
    n: usize,
    values: Vec<f64>,
}

impl CurveSet {
    /// Builds a set from row-major values (`n * grid.len()` entries).
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        let m = grid.len();
        if values.is_empty() {
            return Err(Error::domain("a curve set needs at least one curve"));
        }
        if !values.len().is_multiple_of(m) {
            return Err(Error::domain(format!(
                "{} values do not form rows of length {m}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "value at curve {}, point {} is not finite",
                pos / m,
                pos % m
            )));
        }
        Ok(Self {
            n: values.len() / m,
            grid,
            values,
        })
    }

    pub fn from_rows(grid: TimeGrid, rows: &[Vec<f64>]) -> Result<Self> {
        let m = grid.len();
        if let Some(i) = rows.iter().position(|r| r.len() != m) {
            return Err(Error::domain(format!(
                "curve {i} has {} points, expected {m}",
                rows[i].len()
            )));
        }
        Self::new(grid, rows.concat())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        self.grid.as_slice()
    }

    /// Number of curves.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of points per curve.
    pub fn m(&self) -> usize {
        self.grid.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.m();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.m())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The curves at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let m = self.m();
        let mut values = Vec::with_capacity(indices.len() * m);
        for &i in indices {
            if i >= self.n {
                return Err(Error::domain(format!(
                    "curve index {i} out of range for {} curves",
                    self.n
                )));
            }
            values.extend_from_slice(self.row(i));
        }
        Self::new(self.grid.clone(), values)
    }

    /// Stacks several sets sharing the same grid.
    pub fn concat(sets: &[&CurveSet]) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::domain("nothing to concatenate"))?;
        let mut values = Vec::new();
        for s in sets {
            if s.grid != first.grid {
                return Err(Error::domain("curve sets do not share a time grid"));
            }
            values.extend_from_slice(&s.values);
        }
        Self::new(first.grid.clone(), values)
    }

    /// Pointwise mean over curves.
    pub fn mean_curve(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.m()];
        for row in self.rows() {
            for (acc, x) in mean.iter_mut().zip(row) {
                *acc += x;
            }
        }
        let n = self.n as f64;
        mean.iter_mut().for_each(|v| *v /= n);
        mean
    }

    /// Population variance of every entry of the set.
    pub fn global_variance(&self) -> f64 {
        let count = self.values.len() as f64;
        let mean = self.values.iter().sum::<f64>() / count;
        self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count
    }

    /// Lower bound applied to every variance estimate fitted on this set.
    pub fn variance_floor(&self) -> f64 {
        let var = self.global_variance();
        VARIANCE_FLOOR_RATIO * if var > 0.0 { var } else { 1.0 }
    }
}

/// The `m × (p+1)` matrix of monomials `(1, t_j, …, t_j^p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn degree(&self) -> usize {
        self.rows.ncols() - 1
    }

    pub fn nrows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn get(&self, j: usize, d: usize) -> f64 {
        self.rows[(j, d)]
    }

    /// `βᵀ r_j`.
    pub fn eval(&self, beta: &[f64], j: usize) -> f64 {
        beta.iter()
            .enumerate()
            .map(|(d, b)| b * self.rows[(j, d)])
            .sum()
    }

    /// `Tβ` for every row.
    pub fn eval_all(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.nrows()).map(|j| self.eval(beta, j)).collect()
    }
}

pub fn design_matrix(t: &[f64], p: usize) -> DesignMatrix {
    let rows = DMatrix::from_fn(t.len(), p + 1, |j, d| t[j].powi(d as i32));
    DesignMatrix { rows }
}

/// Log-density of `𝒩(mean, var)` at `x`.
pub fn gaussian_logpdf(x: f64, mean: f64, var: f64) -> Result<f64> {
    if !(var > 0.0) {
        return Err(Error::domain(format!("variance must be positive, got {var}")));
    }
    Ok(log_normal(x, mean, var))
}

#[inline]
pub(crate) fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -HALF_LN_2PI - 0.5 * var.ln() - 0.5 * r * r / var
}

/// One polynomial regime: coefficients `β` (lowest degree first) and noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyRegime {
    pub beta: Vec<f64>,
    pub sigma2: f64,
}

impl PolyRegime {
    pub fn degree(&self) -> usize {
        self.beta.len().saturating_sub(1)
    }
}

/// Logistic gate weights, one `(w_k0, w_k1)` row per regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateWeights {
    pub w: Vec<[f64; 2]>,
}

impl GateWeights {
    pub fn zeros(k: usize) -> Self {
        Self { w: vec![[0.0; 2]; k] }
    }

    pub fn k(&self) -> usize {
        self.w.len()
    }

    /// Subtracts the last row from every row; the proportions are unchanged.
    pub fn pin_last(&mut self) {
        if let Some(&[a, b]) = self.w.last() {
            for row in &mut self.w {
                row[0] -= a;
                row[1] -= b;
            }
        }
    }
}

/// `½ log 2π`, exposed for consumers reproducing likelihood identities.
pub fn half_ln_2pi() -> f64 {
    0.5 * (2.0 * PI).ln()
}
