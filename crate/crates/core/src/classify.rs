//! MAP curve classification from per-class generative fits.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{CurveSet, TimeGrid};
use crate::error::{Error, Result};
use crate::piecewise::{fisher_segment_with, PiecewiseModel, SegmentOptions};
use crate::rhlp::{fit_em, EmConfig, RhlpModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Rhlp,
    Piecewise,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Rhlp => "rhlp",
            Family::Piecewise => "piecewise",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rhlp" => Ok(Family::Rhlp),
            "piecewise" => Ok(Family::Piecewise),
            other => Err(Error::domain(format!(
                "unknown model family `{other}` (expected rhlp or piecewise)"
            ))),
        }
    }
}

/// A fitted class-conditional model of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassModel {
    Piecewise(PiecewiseModel),
    Rhlp(RhlpModel),
}

impl ClassModel {
    pub fn family(&self) -> Family {
        match self {
            ClassModel::Piecewise(_) => Family::Piecewise,
            ClassModel::Rhlp(_) => Family::Rhlp,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        match self {
            ClassModel::Piecewise(m) => &m.grid,
            ClassModel::Rhlp(m) => &m.grid,
        }
    }

    /// `log p(x | class)`.
    pub fn curve_loglik(&self, x: &[f64]) -> f64 {
        match self {
            ClassModel::Piecewise(m) => m.curve_loglik(x),
            ClassModel::Rhlp(m) => m.curve_loglik(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassEntry {
    pub label: i64,
    pub prior: f64,
    pub model: ClassModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    classes: Vec<ClassEntry>,
}

/// What to fit for every class.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    pub family: Family,
    pub k: usize,
    pub p: usize,
    pub em: EmConfig,
    pub segments: SegmentOptions,
}

impl TrainSpec {
    pub fn new(family: Family, k: usize, p: usize) -> Self {
        Self {
            family,
            k,
            p,
            em: EmConfig::default(),
            segments: SegmentOptions::default(),
        }
    }

    pub fn with_em(mut self, em: EmConfig) -> Self {
        self.em = em;
        self
    }

    pub fn fit(&self, curves: &CurveSet) -> Result<ClassModel> {
        Ok(match self.family {
            Family::Piecewise => {
                ClassModel::Piecewise(fisher_segment_with(curves, self.k, self.p, self.segments)?)
            }
            Family::Rhlp => ClassModel::Rhlp(fit_em(curves, self.k, self.p, &self.em)?.0),
        })
    }
}

impl Classifier {
    /// Assembles a classifier from already fitted classes.
    pub fn new(classes: Vec<ClassEntry>) -> Result<Self> {
        let first = classes
            .first()
            .ok_or_else(|| Error::domain("a classifier needs at least one class"))?;
        let (family, m) = (first.model.family(), first.model.grid().len());
        for c in &classes {
            if c.model.family() != family {
                return Err(Error::domain("all classes must use the same model family"));
            }
            if c.model.grid().len() != m {
                return Err(Error::domain(format!(
                    "class {} has {} points per curve, expected {m}",
                    c.label,
                    c.model.grid().len()
                )));
            }
            if !(c.prior > 0.0) {
                return Err(Error::domain(format!("class {} has a non-positive prior", c.label)));
            }
        }
        let total: f64 = classes.iter().map(|c| c.prior).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("class priors sum to {total}, not 1")));
        }
        Ok(Self { classes })
    }

    pub fn classes(&self) -> &[ClassEntry] {
        &self.classes
    }

    pub fn family(&self) -> Family {
        self.classes[0].model.family()
    }

    pub fn m(&self) -> usize {
        self.classes[0].model.grid().len()
    }

    /// `log prior_g + log p(x | g)` for every class.
    pub fn log_scores(&self, curve: &[f64]) -> Vec<f64> {
        self.classes
            .iter()
            .map(|c| c.prior.ln() + c.model.curve_loglik(curve))
            .collect()
    }

    /// Posterior class probabilities, normalized in log space.
    pub fn class_posteriors(&self, curve: &[f64]) -> Vec<f64> {
        normalize_log(&self.log_scores(curve))
    }

    /// Label of the MAP class; ties go to the earlier class.
    pub fn predict(&self, curve: &[f64]) -> i64 {
        self.classes[argmax(&self.log_scores(curve))].label
    }

    pub fn predict_all(&self, curves: &CurveSet) -> Vec<i64> {
        let rows: Vec<&[f64]> = curves.rows().collect();
        rows.par_iter().map(|row| self.predict(row)).collect()
    }
}

/// Exponentiates and normalizes log-weights with the max-subtraction trick.
pub fn normalize_log(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (g, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = g;
        }
    }
    best
}

/// Fits one model per class; priors are the class proportions.
pub fn train(classes: &[(i64, CurveSet)], spec: &TrainSpec) -> Result<Classifier> {
    if classes.is_empty() {
        return Err(Error::domain("no classes to train on"));
    }
    let grid = classes[0].1.grid();
    if let Some((label, _)) = classes.iter().find(|(_, c)| c.grid() != grid) {
        return Err(Error::domain(format!("class {label} uses a different time grid")));
    }
    let total: usize = classes.iter().map(|(_, c)| c.n()).sum();
    let fits: Vec<Result<ClassEntry>> = classes
        .par_iter()
        .map(|(label, curves)| {
            let model = spec.fit(curves).map_err(|e| Error::ClassFit {
                label: *label,
                source: Box::new(e),
            })?;
            Ok(ClassEntry {
                label: *label,
                prior: curves.n() as f64 / total as f64,
                model,
            })
        })
        .collect();
    let mut entries = fits.into_iter().collect::<Result<Vec<_>>>()?;
    // renormalize so rounding in n_g / N cannot trip the sum check
    let s: f64 = entries.iter().map(|e| e.prior).sum();
    entries.iter_mut().for_each(|e| e.prior /= s);
    Classifier::new(entries)
}

/// Splits a labeled set into per-class sets, ordered by label.
pub fn split_by_label(curves: &CurveSet, labels: &[i64]) -> Result<Vec<(i64, CurveSet)>> {
    if labels.len() != curves.n() {
        return Err(Error::domain(format!(
            "{} labels for {} curves",
            labels.len(),
            curves.n()
        )));
    }
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    groups
        .into_iter()
        .map(|(label, idx)| Ok((label, curves.select(&idx)?)))
        .collect()
}

/// Convenience wrapper: group by label, then [`train`].
pub fn train_labeled(curves: &CurveSet, labels: &[i64], spec: &TrainSpec) -> Result<Classifier> {
    train(&split_by_label(curves, labels)?, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{GateWeights, PolyRegime};

    fn const_model(mean: f64, var: f64) -> ClassModel {
        ClassModel::Rhlp(RhlpModel {
            grid: TimeGrid::new(vec![0.0, 1.0]).unwrap(),
            p: 0,
            gate: GateWeights::zeros(1),
            regimes: vec![PolyRegime { beta: vec![mean], sigma2: var }],
            loglik: 0.0,
        })
    }

    #[test]
    fn identical_classes_are_even() {
        let clf = Classifier::new(vec![
            ClassEntry { label: 1, prior: 0.5, model: const_model(0.0, 1.0) },
            ClassEntry { label: 2, prior: 0.5, model: const_model(0.0, 1.0) },
        ])
        .unwrap();
        let post = clf.class_posteriors(&[0.3, -1.2]);
        assert!((post[0] - 0.5).abs() < 1e-15 && (post[1] - 0.5).abs() < 1e-15);
        assert_eq!(clf.predict(&[0.3, -1.2]), 1);
    }

    #[test]
    fn single_class_posterior_is_one() {
        let clf = Classifier::new(vec![ClassEntry { label: 7, prior: 1.0, model: const_model(2.0, 1.0) }]).unwrap();
        assert_eq!(clf.class_posteriors(&[100.0, -100.0]), vec![1.0]);
        assert_eq!(clf.predict(&[0.0, 0.0]), 7);
    }

    #[test]
    fn bayes_rule_by_hand() {
        let clf = Classifier::new(vec![
            ClassEntry { label: 1, prior: 0.3, model: const_model(0.0, 1.0) },
            ClassEntry { label: 2, prior: 0.7, model: const_model(1.0, 2.0) },
        ])
        .unwrap();
        let x = [0.4, 0.9];
        let dens = |mu: f64, var: f64| {
            x.iter()
                .map(|v| (-(v - mu) * (v - mu) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt())
                .product::<f64>()
        };
        let (a, b) = (0.3 * dens(0.0, 1.0), 0.7 * dens(1.0, 2.0));
        let post = clf.class_posteriors(&x);
        assert!((post[0] - a / (a + b)).abs() / (a / (a + b)) < 1e-10);
        assert!((post[1] - b / (a + b)).abs() / (b / (a + b)) < 1e-10);
    }

    #[test]
    fn argmax_takes_first_on_ties() {
        assert_eq!(argmax(&[0.9, 0.1]), 0);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
    }

    #[test]
    fn rejects_bad_priors_and_mixed_families() {
        assert!(Classifier::new(vec![]).is_err());
        assert!(Classifier::new(vec![ClassEntry { label: 1, prior: 0.6, model: const_model(0.0, 1.0) }]).is_err());
    }

    #[test]
    fn priors_are_class_proportions() {
        let grid = TimeGrid::uniform(0.0, 1.0, 4).unwrap();
        let make = |n: usize, level: f64| {
            let vals: Vec<f64> = (0..n * 4).map(|v| level + (v % 3) as f64 * 0.1).collect();
            CurveSet::new(grid.clone(), vals).unwrap()
        };
        let classes = vec![(1, make(35, 0.0)), (2, make(40, 5.0)), (3, make(45, 10.0))];
        let clf = train(&classes, &TrainSpec::new(Family::Piecewise, 1, 0)).unwrap();
        let priors: Vec<f64> = clf.classes().iter().map(|c| c.prior).collect();
        for (p, e) in priors.iter().zip([35.0 / 120.0, 40.0 / 120.0, 45.0 / 120.0]) {
            assert!((p - e).abs() < 1e-15);
        }
    }

    #[test]
    fn split_groups_by_sorted_label() {
        let grid = TimeGrid::uniform(0.0, 1.0, 2).unwrap();
        let c = CurveSet::new(grid, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]).unwrap();
        let groups = split_by_label(&c, &[5, 2, 5]).unwrap();
        assert_eq!(groups[0].0, 2);
        assert_eq!(groups[1].1.n(), 2);
        assert!(split_by_label(&c, &[1]).is_err());
    }
}
