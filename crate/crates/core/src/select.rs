//! BIC selection of the regime count and polynomial degree.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::CurveSet;
use crate::error::{Error, Result};
use crate::rhlp::{fit_em, rhlp_loglik, EmConfig, RhlpModel};

/// Free parameter count `K(p+4) − 2`: `K(p+1)` coefficients, `K` variances and
/// `2(K−1)` gate weights once the last gate row is pinned.
pub fn n_params(k: usize, p: usize) -> usize {
    k * (p + 4) - 2
}

/// `loglik − ν(K, p)·log(nm)/2`.
pub fn bic_value(loglik: f64, k: usize, p: usize, n: usize, m: usize) -> f64 {
    loglik - n_params(k, p) as f64 * ((n * m) as f64).ln() / 2.0
}

/// BIC of a fitted model on the curves it was fitted to.
pub fn bic(model: &RhlpModel, curves: &CurveSet) -> Result<f64> {
    let loglik = rhlp_loglik(model, curves)?;
    Ok(bic_value(loglik, model.k(), model.p, curves.n(), curves.m()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicRow {
    #[serde(rename = "K")]
    pub k: usize,
    pub p: usize,
    pub loglik: f64,
    pub nu: usize,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    #[serde(rename = "K")]
    pub k: usize,
    pub p: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicReport {
    pub n: usize,
    pub m: usize,
    pub rows: Vec<BicRow>,
    /// `(K, p)` maximizing BIC; ties go to smaller `K`, then smaller `p`.
    pub best: (usize, usize),
    pub failures: Vec<CellFailure>,
}

impl BicReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("K\tp\tloglik\tnu\tbic\n");
        for r in &self.rows {
            out.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", r.k, r.p, r.loglik, r.nu, r.bic));
        }
        out
    }
}

/// The BIC-maximizing `(K, p)`; ties go to smaller `K`, then smaller `p`.
pub fn best_cell(rows: &[BicRow]) -> Option<(usize, usize)> {
    rows.iter()
        .fold(None::<&BicRow>, |best, r| match best {
            Some(b) if b.bic > r.bic || (b.bic == r.bic && (b.k, b.p) <= (r.k, r.p)) => Some(b),
            _ => Some(r),
        })
        .map(|r| (r.k, r.p))
}

/// Fits every `(K, p)` cell and reports the BIC-maximizing pair.
pub fn grid_select(
    curves: &CurveSet,
    k_range: RangeInclusive<usize>,
    p_range: RangeInclusive<usize>,
    cfg: &EmConfig,
) -> Result<BicReport> {
    let cells: Vec<(usize, usize)> = k_range
        .flat_map(|k| p_range.clone().map(move |p| (k, p)))
        .collect();
    if cells.is_empty() {
        return Err(Error::domain("empty (K, p) search range"));
    }
    let (n, m) = (curves.n(), curves.m());
    let fitted: Vec<(usize, usize, Result<f64>)> = cells
        .par_iter()
        .map(|&(k, p)| (k, p, fit_em(curves, k, p, cfg).map(|(model, _)| model.loglik)))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (k, p, res) in fitted {
        match res {
            Ok(loglik) => rows.push(BicRow {
                k,
                p,
                loglik,
                nu: n_params(k, p),
                bic: bic_value(loglik, k, p, n, m),
            }),
            Err(e) => {
                log::warn!("BIC cell (K={k}, p={p}) excluded: {e}");
                failures.push(CellFailure {
                    k,
                    p,
                    reason: e.to_string(),
                });
            }
        }
    }
    let best = best_cell(&rows).ok_or_else(|| Error::domain("every (K, p) cell failed to fit"))?;
    Ok(BicReport {
        n,
        m,
        rows,
        best,
        failures,
    })
}
