//! Logistic gate: time-dependent regime proportions and their weighted
//! multinomial-logistic fit by Newton IRLS.

use nalgebra::{DMatrix, DVector};

use crate::curves::{GateWeights, TimeGrid};
use crate::linalg::spd_solve;

use super::{EmConfig, Responsibilities};

const MAX_HALVINGS: usize = 20;
const HESSIAN_DAMPING: f64 = 1e-8;

/// Proportions `π_jk` on a time grid, stored row-major (`m × K`) with their logs.
#[derive(Debug, Clone, PartialEq)]
pub struct GateMatrix {
    m: usize,
    k: usize,
    pi: Vec<f64>,
    log_pi: Vec<f64>,
}

impl GateMatrix {
    pub(crate) fn from_weights(gate: &GateWeights, t: &[f64]) -> Self {
        let k = gate.k();
        let m = t.len();
        let mut pi = vec![0.0; m * k];
        let mut log_pi = vec![0.0; m * k];
        let mut eta = vec![0.0; k];
        for (j, &tj) in t.iter().enumerate() {
            for (e, w) in eta.iter_mut().zip(&gate.w) {
                *e = w[0] + w[1] * tj;
            }
            let max = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = eta.iter().map(|e| (e - max).exp()).sum();
            let lse = max + sum.ln();
            for kk in 0..k {
                let lp = eta[kk] - lse;
                log_pi[j * k + kk] = lp;
                pi[j * k + kk] = lp.exp();
            }
        }
        Self { m, k, pi, log_pi }
    }

    /// Indicator proportions of a hard segmentation with bounds `gamma = (0, …, m)`.
    pub fn from_segmentation(gamma: &[usize]) -> Self {
        let k = gamma.len() - 1;
        let m = gamma[k];
        let mut pi = vec![0.0; m * k];
        let mut log_pi = vec![f64::NEG_INFINITY; m * k];
        for seg in 0..k {
            for j in gamma[seg]..gamma[seg + 1] {
                pi[j * k + seg] = 1.0;
                log_pi[j * k + seg] = 0.0;
            }
        }
        Self { m, k, pi, log_pi }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.pi[j * self.k + k]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.pi[j * self.k..(j + 1) * self.k]
    }

    pub fn log_row(&self, j: usize) -> &[f64] {
        &self.log_pi[j * self.k..(j + 1) * self.k]
    }

    pub(crate) fn log_values(&self) -> &[f64] {
        &self.log_pi
    }
}

/// `π_jk(w) = exp(w_k0 + w_k1 t_j) / Σ_ℓ exp(w_ℓ0 + w_ℓ1 t_j)`, evaluated with max subtraction.
pub fn logistic_proportions(gate: &GateWeights, grid: &TimeGrid) -> GateMatrix {
    GateMatrix::from_weights(gate, grid.as_slice())
}

/// `Σ_j Σ_k T_jk log π_jk` from per-time-point responsibility totals `T` (`m × K`).
pub(crate) fn objective_from_totals(totals: &[f64], gate: &GateMatrix) -> f64 {
    totals
        .iter()
        .zip(gate.log_values())
        .map(|(&t, &lp)| if t == 0.0 { 0.0 } else { t * lp })
        .sum()
}

/// Gradient with respect to the free rows `w_1 … w_{K−1}`, flattened as `(w_k0, w_k1)` pairs.
pub(crate) fn gradient_from_totals(totals: &[f64], gate: &GateMatrix, t: &[f64]) -> Vec<f64> {
    let k = gate.k();
    let free = k - 1;
    let mut g = vec![0.0; 2 * free];
    for (j, &tj) in t.iter().enumerate() {
        let row_t = &totals[j * k..(j + 1) * k];
        let mass: f64 = row_t.iter().sum();
        for kk in 0..free {
            let r = row_t[kk] - mass * gate.get(j, kk);
            g[2 * kk] += r;
            g[2 * kk + 1] += r * tj;
        }
    }
    g
}

/// Negative Hessian of the objective over the free rows (positive semi-definite).
fn neg_hessian_from_totals(totals: &[f64], gate: &GateMatrix, t: &[f64]) -> DMatrix<f64> {
    let k = gate.k();
    let free = k - 1;
    let dim = 2 * free;
    let mut h = DMatrix::zeros(dim, dim);
    for (j, &tj) in t.iter().enumerate() {
        let mass: f64 = totals[j * k..(j + 1) * k].iter().sum();
        let v = [1.0, tj];
        for a in 0..free {
            let pa = gate.get(j, a);
            for b in a..free {
                let pb = gate.get(j, b);
                let coef = mass * pa * (if a == b { 1.0 } else { 0.0 } - pb);
                for da in 0..2 {
                    for db in 0..2 {
                        h[(2 * a + da, 2 * b + db)] += coef * v[da] * v[db];
                    }
                }
            }
        }
    }
    for r in 0..dim {
        for c in 0..r {
            h[(r, c)] = h[(c, r)];
        }
    }
    h
}

/// `Q₁(w) = Σ_i Σ_j Σ_k τ_ijk log π_jk(w)`.
pub fn gate_objective(tau: &Responsibilities, grid: &TimeGrid, gate: &GateWeights) -> f64 {
    let pi = logistic_proportions(gate, grid);
    objective_from_totals(&tau.time_totals(), &pi)
}

/// Analytic gradient of [`gate_objective`] with respect to `w_1 … w_{K−1}`.
pub fn gate_gradient(tau: &Responsibilities, grid: &TimeGrid, gate: &GateWeights) -> Vec<f64> {
    let pi = logistic_proportions(gate, grid);
    gradient_from_totals(&tau.time_totals(), &pi, grid.as_slice())
}

/// Result of one IRLS run.
#[derive(Debug, Clone, PartialEq)]
pub struct IrlsOutcome {
    /// Fitted weights with the last row pinned to `(0, 0)`.
    pub gate: GateWeights,
    pub objective: f64,
    pub iterations: usize,
    /// Gradient fell below the tolerance.
    pub converged: bool,
    /// The Hessian could not be factorized even after damping.
    pub warning: bool,
}

/// Maximizes the responsibility-weighted multinomial logistic objective over the gate weights.
///
/// Newton steps on the free `(K−1) × 2` block; each step is halved until the
/// objective does not decrease.
pub fn irls_gate(
    tau: &Responsibilities,
    grid: &TimeGrid,
    w_init: &GateWeights,
    cfg: &EmConfig,
) -> IrlsOutcome {
    irls_from_totals(
        &tau.time_totals(),
        grid.as_slice(),
        w_init,
        cfg.irls_max_iter,
        cfg.irls_grad_tol,
    )
}

pub(crate) fn irls_from_totals(
    totals: &[f64],
    t: &[f64],
    w_init: &GateWeights,
    max_iter: usize,
    grad_tol: f64,
) -> IrlsOutcome {
    let k = w_init.k();
    let mut gate = w_init.clone();
    gate.pin_last();
    let mut pi = GateMatrix::from_weights(&gate, t);
    let mut objective = objective_from_totals(totals, &pi);
    if k < 2 {
        return IrlsOutcome {
            gate,
            objective,
            iterations: 0,
            converged: true,
            warning: false,
        };
    }
    let mut converged = false;
    let mut warning = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let g = gradient_from_totals(totals, &pi, t);
        if g.iter().all(|v| v.abs() < grad_tol) {
            converged = true;
            break;
        }
        let h = neg_hessian_from_totals(totals, &pi, t);
        let Some((dir, _damped)) = spd_solve(&h, &DVector::from_vec(g), HESSIAN_DAMPING) else {
            log::warn!("IRLS Hessian is singular even after damping; keeping the best iterate");
            warning = true;
            break;
        };
        iterations += 1;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = gate.clone();
            for kk in 0..k - 1 {
                trial.w[kk][0] += step * dir[2 * kk];
                trial.w[kk][1] += step * dir[2 * kk + 1];
            }
            let trial_pi = GateMatrix::from_weights(&trial, t);
            let trial_obj = objective_from_totals(totals, &trial_pi);
            if trial_obj >= objective {
                accepted = Some((trial, trial_pi, trial_obj));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, trial_pi, trial_obj)) => {
                let gain = trial_obj - objective;
                gate = trial;
                pi = trial_pi;
                objective = trial_obj;
                if gain == 0.0 {
                    break;
                }
            }
            None => break,
        }
    }
    IrlsOutcome {
        gate,
        objective,
        iterations,
        converged,
        warning,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_weights_give_uniform_proportions() {
        let grid = TimeGrid::uniform(0.0, 1.0, 5).unwrap();
        let pi = logistic_proportions(&GateWeights::zeros(3), &grid);
        for j in 0..5 {
            for k in 0..3 {
                assert!((pi.get(j, k) - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn inflexion_and_scalar_values() {
        let grid = TimeGrid::new(vec![1.0, 2.0]).unwrap();
        let pi = logistic_proportions(&GateWeights { w: vec![[10.0, -5.0], [0.0, 0.0]] }, &grid);
        assert!((pi.get(1, 0) - 0.5).abs() < 1e-15);
        let pi = logistic_proportions(&GateWeights { w: vec![[2.0, -1.0], [0.0, 0.0]] }, &grid);
        let e = std::f64::consts::E;
        assert!((pi.get(0, 0) - e / (1.0 + e)).abs() < 1e-15);
        assert!((pi.get(0, 0) - 0.731_059).abs() < 1e-6);
    }

    #[test]
    fn extreme_weights_stay_normalized() {
        let grid = TimeGrid::uniform(-3.0, 3.0, 31).unwrap();
        let gate = GateWeights {
            w: vec![[700.0, -700.0], [-700.0, 700.0], [699.0, 1.0], [0.0, 0.0]],
        };
        let pi = logistic_proportions(&gate, &grid);
        for j in 0..31 {
            let s: f64 = pi.row(j).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(pi.row(j).iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn segmentation_gate_is_indicator() {
        let g = GateMatrix::from_segmentation(&[0, 2, 5]);
        assert_eq!(g.row(1), &[1.0, 0.0]);
        assert_eq!(g.row(2), &[0.0, 1.0]);
        assert_eq!(g.log_row(0)[1], f64::NEG_INFINITY);
    }

    #[test]
    fn single_regime_gate_is_returned_unchanged() {
        let totals = vec![1.0; 4];
        let out = irls_from_totals(&totals, &[0.0, 1.0, 2.0, 3.0], &GateWeights::zeros(1), 50, 1e-6);
        assert_eq!(out.gate, GateWeights::zeros(1));
        assert_eq!(out.iterations, 0);
    }
}
