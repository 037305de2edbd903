//! Seeded generators for the simulated datasets: curves from the hidden
//! logistic process model, the smoothness / sample-size / curve-size
//! scenarios, Breiman's waveforms and a heterogeneous-class scenario.
//!
//! All randomness comes from ChaCha streams derived from one seed, so every
//! generator is bit-reproducible. The hidden label process is drawn on stream
//! 0 and curve `i` uses stream `i + 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::curves::{design_matrix, CurveSet, GateWeights, PolyRegime, TimeGrid};
use crate::error::{Error, Result};
use crate::rhlp::{logistic_proportions, RhlpModel};

/// Parameters of a simulated sample. `sigmas` are noise standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub p: usize,
    pub betas: Vec<Vec<f64>>,
    pub gate: GateWeights,
    pub sigmas: Vec<f64>,
    pub n: usize,
    pub m: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub seed: u64,
}

impl SimSpec {
    pub fn k(&self) -> usize {
        self.betas.len()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_size(mut self, n: usize, m: usize) -> Self {
        self.n = n;
        self.m = m;
        self
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.t_start, self.t_end, self.m)
    }

    /// Generating spec matching a fitted or hand-built model.
    pub fn from_model(model: &RhlpModel, n: usize, seed: u64) -> Self {
        Self {
            p: model.p,
            betas: model.regimes.iter().map(|r| r.beta.clone()).collect(),
            gate: model.gate.clone(),
            sigmas: model.regimes.iter().map(|r| r.sigma2.sqrt()).collect(),
            n,
            m: model.m(),
            t_start: model.grid.start(),
            t_end: model.grid.end(),
            seed,
        }
    }

    /// The generating parameters as a model on this spec's grid.
    pub fn model(&self) -> Result<RhlpModel> {
        Ok(RhlpModel {
            grid: self.grid()?,
            p: self.p,
            gate: self.gate.clone(),
            regimes: self
                .betas
                .iter()
                .zip(&self.sigmas)
                .map(|(b, s)| PolyRegime {
                    beta: b.clone(),
                    sigma2: s * s,
                })
                .collect(),
            loglik: f64::NAN,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(Error::domain("spec has no regimes"));
        }
        if self.gate.k() != k || self.sigmas.len() != k {
            return Err(Error::domain(format!(
                "spec has {k} coefficient vectors, {} gate rows and {} noise levels",
                self.gate.k(),
                self.sigmas.len()
            )));
        }
        if self.betas.iter().any(|b| b.len() != self.p + 1) {
            return Err(Error::domain(format!("every regime needs p+1 = {} coefficients", self.p + 1)));
        }
        if self.sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::domain("noise levels must be non-negative"));
        }
        if self.n == 0 {
            return Err(Error::domain("n must be >= 1"));
        }
        if !(self.t_start < self.t_end) || self.m < 2 {
            return Err(Error::domain("need t_start < t_end and m >= 2"));
        }
        Ok(())
    }
}

/// A simulated sample with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub curves: CurveSet,
    /// `Σ_k π_jk(w) β_kᵀ r_j`.
    pub mean_curve: Vec<f64>,
    /// Drawn regime label (1-based) at every time point, shared by all curves.
    pub z: Vec<usize>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn draw_category(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Draws `z_j ~ Multinomial(π_j)` once per time point, then every curve point
/// from the Gaussian of its regime.
pub fn sample_rhlp(spec: &SimSpec) -> Result<Simulated> {
    spec.validate()?;
    let grid = spec.grid()?;
    let phi = design_matrix(grid.as_slice(), spec.p);
    let pi = logistic_proportions(&spec.gate, &grid);
    let k = spec.k();
    let means: Vec<Vec<f64>> = spec.betas.iter().map(|b| phi.eval_all(b)).collect();
    let mean_curve: Vec<f64> = (0..spec.m)
        .map(|j| (0..k).map(|kk| pi.get(j, kk) * means[kk][j]).sum())
        .collect();
    let mut zrng = stream(spec.seed, 0);
    let z: Vec<usize> = (0..spec.m)
        .map(|j| draw_category(pi.row(j), zrng.random::<f64>()))
        .collect();
    let mut values = Vec::with_capacity(spec.n * spec.m);
    for i in 0..spec.n {
        let mut rng = stream(spec.seed, i as u64 + 1);
        for (j, &zj) in z.iter().enumerate() {
            let eps: f64 = rng.sample(StandardNormal);
            values.push(means[zj][j] + spec.sigmas[zj] * eps);
        }
    }
    Ok(Simulated {
        curves: CurveSet::new(grid, values)?,
        mean_curve,
        z: z.into_iter().map(|v| v + 1).collect(),
    })
}

/// Slope divisors of the ten smoothness levels, from abrupt to gradual.
pub const SMOOTHNESS_DIVISORS: [f64; 10] = [1.0, 2.0, 5.0, 10.0, 20.0, 40.0, 50.0, 80.0, 100.0, 125.0];

/// Three constant regimes (0, 10, 5) switching at t ≈ 1 and t ≈ 3, with the gate
/// weights divided by the level's divisor (transition times are preserved).
pub fn smoothness_spec(level: usize) -> Result<SimSpec> {
    if !(1..=10).contains(&level) {
        return Err(Error::domain(format!("smoothness level must be in 1..=10, got {level}")));
    }
    let d = SMOOTHNESS_DIVISORS[level - 1];
    Ok(SimSpec {
        p: 0,
        betas: vec![vec![0.0], vec![10.0], vec![5.0]],
        gate: GateWeights {
            w: vec![[3341.33 / d, -1706.96 / d], [2436.97 / d, -810.07 / d], [0.0, 0.0]],
        },
        sigmas: vec![2.0; 3],
        n: 10,
        m: 100,
        t_start: 0.0,
        t_end: 5.0,
        seed: 0,
    })
}

/// Three quadratic regimes switching at t ≈ 1 and t ≈ 4 on [0, 5].
pub fn three_regime_spec(n: usize, m: usize) -> Result<SimSpec> {
    if n == 0 || m < 2 {
        return Err(Error::domain("need n >= 1 and m >= 2"));
    }
    Ok(SimSpec {
        p: 2,
        betas: vec![
            vec![23.0, -36.0, 18.0],
            vec![-3.9, 11.08, -2.2],
            vec![-337.0, 141.5, -14.0],
        ],
        gate: GateWeights {
            w: vec![[92.72, -46.72], [61.16, -15.28], [0.0, 0.0]],
        },
        sigmas: vec![1.0, 1.25, 0.75],
        n,
        m,
        t_start: 0.0,
        t_end: 5.0,
        seed: 0,
    })
}

/// Triangular waveform peaking at 6 when `t = 11`.
pub fn h1(t: f64) -> f64 {
    (6.0 - (t - 11.0).abs()).max(0.0)
}

pub fn h2(t: f64) -> f64 {
    h1(t - 4.0)
}

pub fn h3(t: f64) -> f64 {
    h1(t + 4.0)
}

/// Sampling of the waveform interval [0, 20] at 1 s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WaveformGrid {
    /// t = 0, 1, …, 20 (21 points).
    #[default]
    Inclusive,
    /// t = 0, 1, …, 19 (20 points).
    HalfOpen,
}

impl WaveformGrid {
    pub fn grid(self) -> TimeGrid {
        let m = match self {
            WaveformGrid::Inclusive => 21,
            WaveformGrid::HalfOpen => 20,
        };
        TimeGrid::new((0..m).map(|j| j as f64).collect()).expect("valid waveform grid")
    }
}

/// Noise-free class shape `u·h_a + (1−u)·h_b`.
pub fn waveform_shape(class: usize, u: f64, t: f64) -> f64 {
    let (a, b) = match class {
        1 => (h1(t), h2(t)),
        2 => (h2(t), h3(t)),
        3 => (h1(t), h3(t)),
        _ => panic!("waveform classes are 1, 2 and 3"),
    };
    u * a + (1.0 - u) * b
}

/// Breiman's three-class waveforms, `n_per_class` curves per class, class by class.
pub fn waveform(n_per_class: usize, seed: u64) -> Result<(CurveSet, Vec<i64>)> {
    waveform_with(n_per_class, seed, WaveformGrid::default())
}

pub fn waveform_with(n_per_class: usize, seed: u64, sampling: WaveformGrid) -> Result<(CurveSet, Vec<i64>)> {
    if n_per_class == 0 {
        return Err(Error::domain("n_per_class must be >= 1"));
    }
    let grid = sampling.grid();
    let mut values = Vec::with_capacity(3 * n_per_class * grid.len());
    let mut labels = Vec::with_capacity(3 * n_per_class);
    for class in 1..=3usize {
        for i in 0..n_per_class {
            let mut rng = stream(seed, ((class - 1) * n_per_class + i) as u64);
            let u: f64 = rng.random();
            for &t in grid.as_slice() {
                let eps: f64 = rng.sample(StandardNormal);
                values.push(waveform_shape(class, u, t) + eps);
            }
            labels.push(class as i64);
        }
    }
    Ok((CurveSet::new(grid, values)?, labels))
}

fn draw_block(model: &RhlpModel, n: usize, seed: u64) -> Result<CurveSet> {
    Ok(sample_rhlp(&SimSpec::from_model(model, n, seed))?.curves)
}

/// Two classes built from three generators: class 1 = 15 curves of A + 25 of B,
/// class 2 = 17 curves of B + 20 of C. Generator B is shared by both classes.
pub fn complex_classes(models: &[RhlpModel; 3], seed: u64) -> Result<(CurveSet, Vec<i64>)> {
    let [a, b, c] = models;
    let blocks = [
        draw_block(a, 15, seed.wrapping_mul(4))?,
        draw_block(b, 25, seed.wrapping_mul(4) + 1)?,
        draw_block(b, 17, seed.wrapping_mul(4) + 2)?,
        draw_block(c, 20, seed.wrapping_mul(4) + 3)?,
    ];
    let curves = CurveSet::concat(&blocks.iter().collect::<Vec<_>>())?;
    let labels = std::iter::repeat_n(1, 40).chain(std::iter::repeat_n(2, 37)).collect();
    Ok((curves, labels))
}

/// Baseline with the same class sizes but one generator per class:
/// class 1 = 40 curves of A, class 2 = 37 curves of C.
pub fn homogeneous_classes(models: &[RhlpModel; 3], seed: u64) -> Result<(CurveSet, Vec<i64>)> {
    let [a, _, c] = models;
    let blocks = [
        draw_block(a, 40, seed.wrapping_mul(2))?,
        draw_block(c, 37, seed.wrapping_mul(2) + 1)?,
    ];
    let curves = CurveSet::concat(&blocks.iter().collect::<Vec<_>>())?;
    let labels = std::iter::repeat_n(1, 40).chain(std::iter::repeat_n(2, 37)).collect();
    Ok((curves, labels))
}

/// Stand-in generators for the heterogeneous-class scenario, on [0, 5] with 100 points:
/// A switches at t ≈ 1 and 4, B has A's regimes switching at t ≈ 2 and 3.5,
/// C is A shifted up by 4.
pub fn switch_standins() -> [RhlpModel; 3] {
    let base = three_regime_spec(1, 100).expect("valid spec");
    let a = base.model().expect("valid model");
    let mut b = a.clone();
    b.gate = GateWeights {
        w: vec![[116.36, -46.72], [53.48, -15.28], [0.0, 0.0]],
    };
    let mut c = a.clone();
    for r in &mut c.regimes {
        r.beta[0] += 4.0;
    }
    [a, b, c]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_free_single_regime_is_the_polynomial() {
        let spec = SimSpec {
            p: 2,
            betas: vec![vec![1.0, -1.0, 0.5]],
            gate: GateWeights::zeros(1),
            sigmas: vec![0.0],
            n: 3,
            m: 11,
            t_start: 0.0,
            t_end: 2.0,
            seed: 9,
        };
        let sim = sample_rhlp(&spec).unwrap();
        for row in sim.curves.rows() {
            for (x, t) in row.iter().zip(sim.curves.times()) {
                assert!((x - (1.0 - t + 0.5 * t * t)).abs() < 1e-14);
            }
        }
        assert!(sim.z.iter().all(|&z| z == 1));
    }

    #[test]
    fn smoothness_levels_scale_slopes() {
        assert_eq!(smoothness_spec(1).unwrap().gate.w[0][1], -1706.96);
        assert!((smoothness_spec(10).unwrap().gate.w[0][1] - (-1706.96 / 125.0)).abs() < 1e-12);
        let alpha = 3341.33 / -1706.96;
        for level in 1..=10 {
            let w = smoothness_spec(level).unwrap().gate.w;
            assert!((w[0][0] / w[0][1] - alpha).abs() < 1e-12);
            assert_eq!(w[2], [0.0, 0.0]);
        }
        assert!(smoothness_spec(0).is_err());
        assert!(smoothness_spec(11).is_err());
    }

    #[test]
    fn level_one_switches_at_one_and_three() {
        let sim = sample_rhlp(&smoothness_spec(1).unwrap().with_seed(5)).unwrap();
        let t = sim.curves.times();
        for (j, &z) in sim.z.iter().enumerate() {
            let expect = if t[j] < 0.95 {
                1
            } else if t[j] > 1.06 && t[j] < 2.95 {
                2
            } else if t[j] > 3.06 {
                3
            } else {
                continue;
            };
            assert_eq!(z, expect, "t = {}", t[j]);
        }
    }

    #[test]
    fn table3_spec_values() {
        let s = three_regime_spec(50, 100).unwrap();
        assert_eq!(s.betas[0], vec![23.0, -36.0, 18.0]);
        assert_eq!(s.betas[1], vec![-3.9, 11.08, -2.2]);
        assert_eq!(s.betas[2], vec![-337.0, 141.5, -14.0]);
        assert_eq!(s.gate.w, vec![[92.72, -46.72], [61.16, -15.28], [0.0, 0.0]]);
        assert_eq!(s.sigmas, vec![1.0, 1.25, 0.75]);
        let sim = sample_rhlp(&s.with_seed(1)).unwrap();
        assert!((sim.mean_curve[0] - 23.0).abs() < 1e-6);
    }

    #[test]
    fn waveform_peaks() {
        assert_eq!(h1(11.0), 6.0);
        assert_eq!(h2(15.0), 6.0);
        assert_eq!(h3(7.0), 6.0);
        assert_eq!(h1(0.0), 0.0);
        for t in 0..=20 {
            assert_eq!(waveform_shape(1, 1.0, t as f64), h1(t as f64));
        }
        let (c, labels) = waveform(4, 1).unwrap();
        assert_eq!(c.m(), 21);
        assert_eq!(c.n(), 12);
        assert_eq!(labels, vec![1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3]);
        assert_eq!(waveform_with(1, 1, WaveformGrid::HalfOpen).unwrap().0.m(), 20);
    }

    #[test]
    fn generators_are_deterministic() {
        let s = three_regime_spec(5, 30).unwrap().with_seed(77);
        assert_eq!(sample_rhlp(&s).unwrap(), sample_rhlp(&s).unwrap());
        assert_eq!(waveform(3, 2).unwrap(), waveform(3, 2).unwrap());
        let models = switch_standins();
        let (c, l) = complex_classes(&models, 3).unwrap();
        assert_eq!((c.n(), l.len()), (77, 77));
        assert_eq!(l.iter().filter(|&&v| v == 1).count(), 40);
        assert_eq!(complex_classes(&models, 3).unwrap().0, c);
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut s = three_regime_spec(2, 10).unwrap();
        s.sigmas.pop();
        assert!(sample_rhlp(&s).is_err());
        let mut s = three_regime_spec(2, 10).unwrap();
        s.t_end = s.t_start;
        assert!(sample_rhlp(&s).is_err());
    }
}
