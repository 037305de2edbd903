use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{design_matrix, CurveSet, DesignMatrix, GateWeights, PolyRegime};
use crate::error::{Error, Result};
use crate::piecewise::segment_fit_with_floor;

use super::gate::{irls_from_totals, GateMatrix};
use super::{e_step_with_gate, m_step_beta_with, m_step_sigma_with, Responsibilities, RhlpModel};

/// Slack allowed when checking that the log-likelihood never decreases.
const MONOTONE_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Stop once `|L_q − L_{q−1}| ≤ tol · |L_{q−1}|`.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub irls_max_iter: usize,
    pub irls_grad_tol: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-6,
            restarts: 5,
            seed: 42,
            irls_max_iter: 50,
            irls_grad_tol: 1e-6,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(Error::domain("max_iter must be >= 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::domain("tol must be > 0"));
        }
        if self.restarts < 1 {
            return Err(Error::domain("restarts must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmTrace {
    /// Log-likelihood at the initial parameters and after every EM iteration.
    pub logliks: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the restart that produced the returned model.
    pub restart: usize,
}

impl EmTrace {
    /// Largest drop between consecutive log-likelihood values (0 when monotone).
    pub fn max_decrease(&self) -> f64 {
        self.logliks
            .windows(2)
            .map(|w| (w[0] - w[1]).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Segment bounds splitting the time range into `k` intervals of equal duration.
fn equal_time_bounds(t: &[f64], k: usize) -> Vec<usize> {
    let m = t.len();
    let (t0, span) = (t[0], t[m - 1] - t[0]);
    let mut gamma = vec![0; k + 1];
    gamma[k] = m;
    for (s, g) in gamma.iter_mut().enumerate().take(k).skip(1) {
        let cut = t0 + span * s as f64 / k as f64;
        *g = t.partition_point(|&v| v < cut);
    }
    if gamma.windows(2).all(|w| w[0] < w[1]) {
        gamma
    } else {
        (0..=k).map(|s| s * m / k).collect()
    }
}

/// Bounds from `k − 1` uniformly drawn cut times, each segment holding at least `min_len` points.
fn random_time_bounds(t: &[f64], k: usize, min_len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = t.len();
    let (t0, t1) = (t[0], t[m - 1]);
    for _ in 0..200 {
        let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.random_range(t0..t1)).collect();
        cuts.sort_by(f64::total_cmp);
        let mut gamma = Vec::with_capacity(k + 1);
        gamma.push(0);
        gamma.extend(cuts.iter().map(|&c| t.partition_point(|&v| v <= c)));
        gamma.push(m);
        if gamma.windows(2).all(|w| w[1] >= w[0] + min_len) {
            return gamma;
        }
    }
    equal_time_bounds(t, k)
}

fn regimes_on_bounds(curves: &CurveSet, gamma: &[usize], p: usize, floor: f64) -> Result<Vec<PolyRegime>> {
    gamma
        .windows(2)
        .map(|w| {
            let fit = segment_fit_with_floor(curves, w[0], w[1], p, floor)?;
            Ok(PolyRegime {
                beta: fit.beta,
                sigma2: fit.sigma2,
            })
        })
        .collect()
}

/// Starting parameters for restart `restart`: per-interval least-squares fits and a flat gate.
///
/// Restart 0 uses `K` equal-duration intervals; later restarts draw the
/// interval boundaries at random from a stream derived from `seed`.
pub fn initial_model(curves: &CurveSet, k: usize, p: usize, seed: u64, restart: usize) -> Result<RhlpModel> {
    let t = curves.times();
    let m = t.len();
    if k == 0 || k > m {
        return Err(Error::domain(format!("K must be in 1..={m}, got {k}")));
    }
    let gamma = if restart == 0 || k == 1 {
        equal_time_bounds(t, k)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let min_len = if k * (p + 1) <= m { p + 1 } else { 1 };
        random_time_bounds(t, k, min_len, &mut rng)
    };
    let regimes = regimes_on_bounds(curves, &gamma, p, curves.variance_floor())?;
    Ok(RhlpModel {
        grid: curves.grid().clone(),
        p,
        gate: GateWeights::zeros(k),
        regimes,
        loglik: f64::NAN,
    })
}

fn relative_change(prev: f64, cur: f64) -> f64 {
    (cur - prev).abs() / prev.abs().max(f64::MIN_POSITIVE)
}

struct Run {
    model: RhlpModel,
    trace: EmTrace,
}

fn run_em(curves: &CurveSet, mut model: RhlpModel, phi: &DesignMatrix, floor: f64, cfg: &EmConfig) -> Result<Run> {
    let t = curves.times();
    let mut gate = GateMatrix::from_weights(&model.gate, t);
    let mut tau = e_step_with_gate(&gate, &model.regimes, phi, curves);
    let mut logliks = vec![tau.loglik];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iter {
        let regimes = m_step(&tau, curves, phi, floor)?;
        let irls = irls_from_totals(
            &tau.time_totals(),
            t,
            &model.gate,
            cfg.irls_max_iter,
            cfg.irls_grad_tol,
        );
        model.gate = irls.gate;
        model.regimes = regimes;
        gate = GateMatrix::from_weights(&model.gate, t);
        let prev = tau.loglik;
        tau = e_step_with_gate(&gate, &model.regimes, phi, curves);
        iterations += 1;
        if !tau.loglik.is_finite() {
            return Err(Error::domain(format!(
                "log-likelihood became non-finite at iteration {iterations}"
            )));
        }
        logliks.push(tau.loglik);
        if tau.loglik < prev - MONOTONE_SLACK {
            log::warn!(
                "log-likelihood decreased by {:e} at iteration {iterations}",
                prev - tau.loglik
            );
        }
        if relative_change(prev, tau.loglik) < cfg.tol {
            converged = true;
            break;
        }
    }
    model.loglik = tau.loglik;
    Ok(Run {
        model,
        trace: EmTrace {
            logliks,
            iterations,
            converged,
            restart: 0,
        },
    })
}

fn m_step(tau: &Responsibilities, curves: &CurveSet, phi: &DesignMatrix, floor: f64) -> Result<Vec<PolyRegime>> {
    let update = m_step_beta_with(tau, curves, phi);
    if let Some(&k) = update.starved.first() {
        let mass = tau.regime_mass()[k];
        return Err(Error::StarvedRegime { regime: k + 1, mass });
    }
    let sigma2 = m_step_sigma_with(tau, curves, phi, &update.betas, floor)?;
    Ok(update
        .betas
        .into_iter()
        .zip(sigma2)
        .map(|(beta, sigma2)| PolyRegime { beta, sigma2 })
        .collect())
}

fn check_dims(curves: &CurveSet, k: usize, p: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::domain("K must be >= 1"));
    }
    if k > curves.m() {
        return Err(Error::domain(format!(
            "K = {k} exceeds the {} points per curve",
            curves.m()
        )));
    }
    if k * (p + 1) > curves.n() * curves.m() {
        return Err(Error::domain(format!(
            "K(p+1) = {} exceeds the {} observations",
            k * (p + 1),
            curves.n() * curves.m()
        )));
    }
    Ok(())
}

/// Maximum-likelihood fit by EM, keeping the best of `cfg.restarts` initializations.
pub fn fit_em(curves: &CurveSet, k: usize, p: usize, cfg: &EmConfig) -> Result<(RhlpModel, EmTrace)> {
    cfg.validate()?;
    check_dims(curves, k, p)?;
    let phi = design_matrix(curves.times(), p);
    let floor = curves.variance_floor();
    let runs: Vec<Result<Run>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let init = initial_model(curves, k, p, cfg.seed, r)?;
            let mut run = run_em(curves, init, &phi, floor, cfg)?;
            run.trace.restart = r;
            Ok(run)
        })
        .collect();
    let mut best: Option<Run> = None;
    let mut last_err = None;
    for run in runs {
        match run {
            Ok(run) => {
                if best
                    .as_ref()
                    .is_none_or(|b| run.model.loglik > b.model.loglik)
                {
                    best = Some(run);
                }
            }
            Err(e) => {
                log::debug!("EM restart discarded: {e}");
                last_err = Some(e);
            }
        }
    }
    match best {
        Some(run) => Ok((run.model, run.trace)),
        None => Err(Error::AllRestartsDegenerate {
            restarts: cfg.restarts,
            reason: last_err.map_or_else(|| "unknown".into(), |e| e.to_string()),
        }),
    }
}

/// EM with the proportions held fixed: only the regression coefficients and variances are updated.
pub fn fit_em_frozen_gate(
    curves: &CurveSet,
    gate: &GateMatrix,
    p: usize,
    cfg: &EmConfig,
) -> Result<(Vec<PolyRegime>, EmTrace)> {
    cfg.validate()?;
    let k = gate.k();
    check_dims(curves, k, p)?;
    if gate.m() != curves.m() {
        return Err(Error::domain("gate and curves have different lengths"));
    }
    let phi = design_matrix(curves.times(), p);
    let floor = curves.variance_floor();
    let mut regimes = initial_model(curves, k, p, cfg.seed, 0)?.regimes;
    let mut tau = e_step_with_gate(gate, &regimes, &phi, curves);
    let mut logliks = vec![tau.loglik];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iter {
        regimes = m_step(&tau, curves, &phi, floor)?;
        let prev = tau.loglik;
        tau = e_step_with_gate(gate, &regimes, &phi, curves);
        iterations += 1;
        logliks.push(tau.loglik);
        if relative_change(prev, tau.loglik) < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok((
        regimes,
        EmTrace {
            logliks,
            iterations,
            converged,
            restart: 0,
        },
    ))
}
