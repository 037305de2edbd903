//! Regression with a hidden logistic process.
//!
//! Every point of every curve is drawn from one of `K` polynomial regimes,
//! chosen by a latent label whose distribution at time `t_j` is a softmax of
//! `K` linear functions of `t_j`:
//!
//! ```text
//! p(x_ij; θ) = Σ_k π_jk(w) · 𝒩(x_ij; β_kᵀ r_j, σ²_k)
//! ```
//!
//! The parameters are fitted by EM: the E-step computes posterior regime
//! memberships, the M-step solves one weighted least-squares problem per
//! regime, updates the variances in closed form, and refits the gate weights
//! by IRLS.

mod em;
mod gate;

pub use em::{fit_em, fit_em_frozen_gate, initial_model, EmConfig, EmTrace};
pub use gate::{
    gate_gradient, gate_objective, irls_gate, logistic_proportions, GateMatrix, IrlsOutcome,
};

use serde::{Deserialize, Serialize};

use crate::curves::{design_matrix, CurveSet, DesignMatrix, GateWeights, PolyRegime, TimeGrid, HALF_LN_2PI};
use crate::error::{Error, Result};
use crate::linalg::weighted_least_squares;

/// Total responsibility below which a regime is considered starved.
pub const STARVATION_MASS: f64 = 1e-12;

/// A fitted (or generating) hidden-logistic-process regression model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhlpModel {
    pub grid: TimeGrid,
    pub p: usize,
    pub gate: GateWeights,
    pub regimes: Vec<PolyRegime>,
    pub loglik: f64,
}

impl RhlpModel {
    pub fn k(&self) -> usize {
        self.regimes.len()
    }

    pub fn m(&self) -> usize {
        self.grid.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.regimes.len();
        if k == 0 {
            return Err(Error::domain("model has no regimes"));
        }
        if self.gate.k() != k {
            return Err(Error::domain(format!(
                "gate has {} rows for {k} regimes",
                self.gate.k()
            )));
        }
        for (r, regime) in self.regimes.iter().enumerate() {
            if regime.beta.len() != self.p + 1 {
                return Err(Error::domain(format!(
                    "regime {} has {} coefficients, expected p+1 = {}",
                    r + 1,
                    regime.beta.len(),
                    self.p + 1
                )));
            }
            if !(regime.sigma2 > 0.0) || !regime.sigma2.is_finite() {
                return Err(Error::domain(format!("regime {} has invalid variance", r + 1)));
            }
        }
        if self.gate.w.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::domain("gate weights must be finite"));
        }
        Ok(())
    }

    pub fn proportions(&self) -> GateMatrix {
        logistic_proportions(&self.gate, &self.grid)
    }

    /// Regime means `β_kᵀ r_j`, row-major `m × K`.
    fn regime_means(&self, phi: &DesignMatrix) -> Vec<f64> {
        regime_means(&self.regimes, phi)
    }

    /// Log-density of a single curve: `Σ_j log Σ_k π_jk 𝒩(x_j; β_kᵀr_j, σ²_k)`.
    pub fn curve_loglik(&self, x: &[f64]) -> f64 {
        let phi = design_matrix(self.grid.as_slice(), self.p);
        let mu = self.regime_means(&phi);
        let kernel = MixtureKernel::new(&self.proportions(), &mu, &self.regimes);
        let mut buf = vec![0.0; self.k()];
        x.iter()
            .enumerate()
            .map(|(j, &v)| kernel.log_terms(j, v, &mut buf))
            .sum()
    }
}

fn regime_means(regimes: &[PolyRegime], phi: &DesignMatrix) -> Vec<f64> {
    let k = regimes.len();
    let m = phi.nrows();
    let mut mu = vec![0.0; m * k];
    for j in 0..m {
        for (kk, r) in regimes.iter().enumerate() {
            mu[j * k + kk] = phi.eval(&r.beta, j);
        }
    }
    mu
}

/// Precomputed per-(j, k) pieces of `log π_jk + log 𝒩(·; μ_jk, σ²_k)`.
struct MixtureKernel<'a> {
    k: usize,
    mu: &'a [f64],
    offset: Vec<f64>,
    inv_two_var: Vec<f64>,
}

impl<'a> MixtureKernel<'a> {
    fn new(gate: &GateMatrix, mu: &'a [f64], regimes: &[PolyRegime]) -> Self {
        let k = regimes.len();
        let log_pi = gate.log_values();
        let offset = log_pi
            .iter()
            .enumerate()
            .map(|(idx, lp)| lp - HALF_LN_2PI - 0.5 * regimes[idx % k].sigma2.ln())
            .collect();
        let inv_two_var = regimes.iter().map(|r| 0.5 / r.sigma2).collect();
        Self {
            k,
            mu,
            offset,
            inv_two_var,
        }
    }

    /// Fills `buf` with the joint log-terms for observation `x` at point `j`
    /// and returns their log-sum-exp.
    #[inline]
    fn log_terms(&self, j: usize, x: f64, buf: &mut [f64]) -> f64 {
        let base = j * self.k;
        let mut max = f64::NEG_INFINITY;
        for kk in 0..self.k {
            let r = x - self.mu[base + kk];
            let a = self.offset[base + kk] - r * r * self.inv_two_var[kk];
            buf[kk] = a;
            if a > max {
                max = a;
            }
        }
        let s: f64 = buf.iter().map(|a| (a - max).exp()).sum();
        max + s.ln()
    }
}

/// Posterior regime memberships `τ_ijk`, stored as `[(i·m + j)·K + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    n: usize,
    m: usize,
    k: usize,
    tau: Vec<f64>,
    /// Observed-data log-likelihood at the parameters that produced these posteriors.
    pub loglik: f64,
}

impl Responsibilities {
    /// Wraps externally supplied memberships; every `(i, j)` must sum to one.
    pub fn new(n: usize, m: usize, k: usize, tau: Vec<f64>) -> Result<Self> {
        if tau.len() != n * m * k || k == 0 {
            return Err(Error::domain(format!(
                "expected {}·{}·{} responsibilities, got {}",
                n,
                m,
                k,
                tau.len()
            )));
        }
        for (cell, chunk) in tau.chunks_exact(k).enumerate() {
            let s: f64 = chunk.iter().sum();
            if chunk.iter().any(|v| !(0.0..=1.0).contains(v)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::domain(format!(
                    "responsibilities of curve {}, point {} are not a distribution",
                    cell / m,
                    cell % m
                )));
            }
        }
        Ok(Self {
            n,
            m,
            k,
            tau,
            loglik: f64::NAN,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.tau[(i * self.m + j) * self.k + k]
    }

    pub fn cell(&self, i: usize, j: usize) -> &[f64] {
        let base = (i * self.m + j) * self.k;
        &self.tau[base..base + self.k]
    }

    /// `T_jk = Σ_i τ_ijk`, row-major `m × K`.
    pub fn time_totals(&self) -> Vec<f64> {
        let mut totals = vec![0.0; self.m * self.k];
        for chunk in self.tau.chunks_exact(self.m * self.k) {
            for (acc, v) in totals.iter_mut().zip(chunk) {
                *acc += v;
            }
        }
        totals
    }

    /// `Σ_i Σ_j τ_ijk` for every regime.
    pub fn regime_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.k];
        for chunk in self.tau.chunks_exact(self.k) {
            for (acc, v) in mass.iter_mut().zip(chunk) {
                *acc += v;
            }
        }
        mass
    }
}

fn check_grid(grid: &TimeGrid, curves: &CurveSet) -> Result<()> {
    if grid != curves.grid() {
        return Err(Error::domain(format!(
            "model grid ({} points) does not match the curves grid ({} points)",
            grid.len(),
            curves.m()
        )));
    }
    Ok(())
}

pub(crate) fn e_step_with_gate(
    gate: &GateMatrix,
    regimes: &[PolyRegime],
    phi: &DesignMatrix,
    curves: &CurveSet,
) -> Responsibilities {
    let (n, m, k) = (curves.n(), curves.m(), regimes.len());
    let mu = regime_means(regimes, phi);
    let kernel = MixtureKernel::new(gate, &mu, regimes);
    let mut tau = vec![0.0; n * m * k];
    let mut buf = vec![0.0; k];
    let mut loglik = 0.0;
    for (i, row) in curves.rows().enumerate() {
        let mut curve_ll = 0.0;
        for (j, &x) in row.iter().enumerate() {
            let lse = kernel.log_terms(j, x, &mut buf);
            curve_ll += lse;
            let base = (i * m + j) * k;
            for kk in 0..k {
                tau[base + kk] = (buf[kk] - lse).exp();
            }
        }
        loglik += curve_ll;
    }
    Responsibilities {
        n,
        m,
        k,
        tau,
        loglik,
    }
}

/// Posterior memberships at the model's parameters, computed in log space.
pub fn e_step(model: &RhlpModel, curves: &CurveSet) -> Result<Responsibilities> {
    check_grid(&model.grid, curves)?;
    let phi = design_matrix(model.grid.as_slice(), model.p);
    Ok(e_step_with_gate(&model.proportions(), &model.regimes, &phi, curves))
}

/// `Σ_i Σ_j log Σ_k π_jk 𝒩(x_ij; β_kᵀr_j, σ²_k)`.
pub fn rhlp_loglik(model: &RhlpModel, curves: &CurveSet) -> Result<f64> {
    check_grid(&model.grid, curves)?;
    let phi = design_matrix(model.grid.as_slice(), model.p);
    let mu = model.regime_means(&phi);
    let kernel = MixtureKernel::new(&model.proportions(), &mu, &model.regimes);
    let mut buf = vec![0.0; model.k()];
    Ok(curves
        .rows()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, &x)| kernel.log_terms(j, x, &mut buf))
                .sum::<f64>()
        })
        .sum())
}

/// Coefficients from the weighted least-squares M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaUpdate {
    pub betas: Vec<Vec<f64>>,
    /// Regimes whose responsibility mass vanished; they received an unweighted fit.
    pub starved: Vec<usize>,
}

fn check_tau(tau: &Responsibilities, curves: &CurveSet) -> Result<()> {
    if tau.n != curves.n() || tau.m != curves.m() {
        return Err(Error::domain(format!(
            "responsibilities are {}×{}, curves are {}×{}",
            tau.n,
            tau.m,
            curves.n(),
            curves.m()
        )));
    }
    Ok(())
}

pub(crate) fn m_step_beta_with(
    tau: &Responsibilities,
    curves: &CurveSet,
    phi: &DesignMatrix,
) -> BetaUpdate {
    let (m, k) = (tau.m, tau.k);
    // Σ_i τ_ijk (x_ij − μ)² = Σ_j W_jk (x̄_jk − μ)² + const, so the stacked
    // n·m problem reduces to an m-row weighted fit of the responsibility means.
    let mut weight = vec![0.0; m * k];
    let mut moment = vec![0.0; m * k];
    for (i, row) in curves.rows().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            let cell = tau.cell(i, j);
            for kk in 0..k {
                weight[j * k + kk] += cell[kk];
                moment[j * k + kk] += cell[kk] * x;
            }
        }
    }
    let mut betas = Vec::with_capacity(k);
    let mut starved = Vec::new();
    let mut w = vec![0.0; m];
    let mut y = vec![0.0; m];
    let mut mean_curve = None;
    for kk in 0..k {
        let mut mass = 0.0;
        for j in 0..m {
            w[j] = weight[j * k + kk];
            y[j] = if w[j] > 0.0 { moment[j * k + kk] / w[j] } else { 0.0 };
            mass += w[j];
        }
        if mass < STARVATION_MASS {
            starved.push(kk);
            let mean = mean_curve.get_or_insert_with(|| curves.mean_curve());
            let unit = vec![1.0; m];
            betas.push(weighted_least_squares(phi.matrix(), mean, &unit).beta);
        } else {
            let sol = weighted_least_squares(phi.matrix(), &y, &w);
            if sol.ridged {
                log::debug!("regime {} design is rank deficient; ridge-regularized", kk + 1);
            }
            betas.push(sol.beta);
        }
    }
    BetaUpdate { betas, starved }
}

/// `β_k = argmin Σ_i Σ_j τ_ijk (x_ij − βᵀr_j)²` for every regime.
pub fn m_step_beta(tau: &Responsibilities, curves: &CurveSet, p: usize) -> Result<BetaUpdate> {
    check_tau(tau, curves)?;
    let phi = design_matrix(curves.times(), p);
    Ok(m_step_beta_with(tau, curves, &phi))
}

pub(crate) fn m_step_sigma_with(
    tau: &Responsibilities,
    curves: &CurveSet,
    phi: &DesignMatrix,
    betas: &[Vec<f64>],
    floor: f64,
) -> Result<Vec<f64>> {
    let k = tau.k;
    let fitted: Vec<Vec<f64>> = betas.iter().map(|b| phi.eval_all(b)).collect();
    let mut num = vec![0.0; k];
    let mut den = vec![0.0; k];
    for (i, row) in curves.rows().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            let cell = tau.cell(i, j);
            for kk in 0..k {
                let r = x - fitted[kk][j];
                num[kk] += cell[kk] * r * r;
                den[kk] += cell[kk];
            }
        }
    }
    num.iter()
        .zip(&den)
        .enumerate()
        .map(|(kk, (&s, &d))| {
            if d < STARVATION_MASS {
                Err(Error::StarvedRegime { regime: kk + 1, mass: d })
            } else {
                Ok((s / d).max(floor))
            }
        })
        .collect()
}

/// `σ²_k = Σ τ_ijk (x_ij − β_kᵀr_j)² / Σ τ_ijk`, clamped to the variance floor of `curves`.
pub fn m_step_sigma(
    tau: &Responsibilities,
    curves: &CurveSet,
    betas: &[Vec<f64>],
) -> Result<Vec<f64>> {
    check_tau(tau, curves)?;
    if betas.len() != tau.k {
        return Err(Error::domain(format!(
            "{} coefficient vectors for {} regimes",
            betas.len(),
            tau.k
        )));
    }
    let p = betas.first().map_or(0, |b| b.len().saturating_sub(1));
    let phi = design_matrix(curves.times(), p);
    m_step_sigma_with(tau, curves, &phi, betas, curves.variance_floor())
}

/// `x̂_j = Σ_k π_jk(w) β_kᵀ r_j`.
pub fn rhlp_approximation(model: &RhlpModel) -> Vec<f64> {
    let phi = design_matrix(model.grid.as_slice(), model.p);
    let mu = model.regime_means(&phi);
    let pi = model.proportions();
    let k = model.k();
    (0..model.m())
        .map(|j| (0..k).map(|kk| pi.get(j, kk) * mu[j * k + kk]).sum())
        .collect()
}
