//! Differential evolution (DE/rand/1/bin) over a box.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::stats::rng_from_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub pop_size: usize,
    pub max_iter: usize,
    pub f_weight: f64,
    pub crossover: f64,
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
    /// Generations without a strict improvement of the best value before
    /// the search stops.
    pub tol_stall: usize,
}

impl DeConfig {
    /// Default settings for a box: population 10·dim (at least 20),
    /// F = 0.8, CR = 0.9, 200 generations, stall limit 50.
    pub fn new(bounds: Vec<(f64, f64)>, seed: u64) -> Self {
        DeConfig {
            pop_size: (10 * bounds.len()).max(20),
            max_iter: 200,
            f_weight: 0.8,
            crossover: 0.9,
            bounds,
            seed,
            tol_stall: 50,
        }
    }

    /// The same box in every one of `dim` coordinates.
    pub fn cube(dim: usize, lo: f64, hi: f64, seed: u64) -> Self {
        Self::new(vec![(lo, hi); dim], seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pop_size < 4 {
            return Err(Error::config(format!("DE population must be at least 4, got {}", self.pop_size)));
        }
        if !(self.f_weight > 0.0 && self.f_weight <= 2.0) {
            return Err(Error::config(format!("DE weight F must lie in (0, 2], got {}", self.f_weight)));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(Error::config(format!("DE crossover must lie in [0, 1], got {}", self.crossover)));
        }
        for (k, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::config(format!("invalid bounds ({lo}, {hi}) in coordinate {k}")));
            }
        }
        Ok(())
    }

    fn is_degenerate(&self) -> bool {
        self.bounds.iter().all(|&(lo, hi)| lo == hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeResult {
    pub argmin: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub generations: usize,
    /// Best value after initialization and after each generation.
    pub trace: Vec<f64>,
}

fn checked(x: &[f64], v: f64) -> Result<f64> {
    if v.is_nan() {
        return Err(Error::NonFinite(x.to_vec()));
    }
    Ok(v)
}

/// Minimizes `objective` over the box in `config`.
///
/// Trial vectors for a generation are generated from the seeded RNG in a
/// fixed order, then evaluated (possibly in parallel), then selected with
/// `f(trial) <= f(target)`. The trajectory therefore depends only on the
/// configuration.
pub fn de_minimize<F>(objective: F, config: &DeConfig) -> Result<DeResult>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    config.validate()?;
    let dim = config.bounds.len();
    if config.is_degenerate() {
        let x: Vec<f64> = config.bounds.iter().map(|b| b.0).collect();
        let v = checked(&x, objective(&x))?;
        return Ok(DeResult { argmin: x, value: v, evals: 1, generations: 0, trace: vec![v] });
    }
    let np = config.pop_size;
    let mut rng = rng_from_seed(config.seed);
    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| config.bounds.iter().map(|&(lo, hi)| lo + rng.random::<f64>() * (hi - lo)).collect())
        .collect();
    let mut fit = par::map_range(np, |i| objective(&pop[i]));
    for (x, &v) in pop.iter().zip(&fit) {
        checked(x, v)?;
    }
    let mut evals = np;
    let best_of = |fit: &[f64]| {
        let mut b = 0;
        for i in 1..fit.len() {
            if fit[i] < fit[b] {
                b = i;
            }
        }
        b
    };
    let mut best = best_of(&fit);
    let mut trace = vec![fit[best]];
    let mut stall = 0;
    let mut generations = 0;
    let mut trials = vec![vec![0.0; dim]; np];
    while generations < config.max_iter && stall < config.tol_stall {
        for (i, trial) in trials.iter_mut().enumerate() {
            let r1 = pick_distinct(&mut rng, np, &[i]);
            let r2 = pick_distinct(&mut rng, np, &[i, r1]);
            let r3 = pick_distinct(&mut rng, np, &[i, r1, r2]);
            let jrand = rng.random_range(0..dim);
            for j in 0..dim {
                let cross = rng.random::<f64>() < config.crossover || j == jrand;
                trial[j] = if cross {
                    let (lo, hi) = config.bounds[j];
                    (pop[r1][j] + config.f_weight * (pop[r2][j] - pop[r3][j])).clamp(lo, hi)
                } else {
                    pop[i][j]
                };
            }
        }
        let trial_fit = par::map_range(np, |i| objective(&trials[i]));
        evals += np;
        for i in 0..np {
            checked(&trials[i], trial_fit[i])?;
            if trial_fit[i] <= fit[i] {
                std::mem::swap(&mut pop[i], &mut trials[i]);
                fit[i] = trial_fit[i];
            }
        }
        generations += 1;
        let new_best = best_of(&fit);
        if fit[new_best] < trace[trace.len() - 1] {
            stall = 0;
        } else {
            stall += 1;
        }
        best = new_best;
        trace.push(fit[best]);
    }
    Ok(DeResult { argmin: pop[best].clone(), value: fit[best], evals, generations, trace })
}

fn pick_distinct(rng: &mut impl Rng, n: usize, exclude: &[usize]) -> usize {
    loop {
        let r = rng.random_range(0..n);
        if !exclude.contains(&r) {
            return r;
        }
    }
}

/// Maximizes by minimizing the negated objective. The returned value is the
/// maximum (not negated).
pub fn de_maximize<F>(objective: F, config: &DeConfig) -> Result<DeResult>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let mut r = de_minimize(|x| -objective(x), config)?;
    r.value = -r.value;
    for v in &mut r.trace {
        *v = -*v;
    }
    Ok(r)
}

/// DE settings shared by the estimators, independent of dimension and seed.
/// Every free coefficient is searched over `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSettings {
    /// `None` means 10 per dimension, at least 20.
    pub pop_size: Option<usize>,
    pub max_iter: usize,
    pub f_weight: f64,
    pub crossover: f64,
    pub tol_stall: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            pop_size: None,
            max_iter: 200,
            f_weight: 0.8,
            crossover: 0.9,
            tol_stall: 50,
            lo: -10.0,
            hi: 10.0,
        }
    }
}

impl SearchSettings {
    pub fn de_config(&self, dim: usize, seed: u64) -> DeConfig {
        let mut c = DeConfig::cube(dim, self.lo, self.hi, seed);
        if let Some(p) = self.pop_size {
            c.pop_size = p;
        }
        c.max_iter = self.max_iter;
        c.f_weight = self.f_weight;
        c.crossover = self.crossover;
        c.tol_stall = self.tol_stall;
        c
    }

    /// Collapses the box to the single point `at` (for checks that the
    /// estimators return the box point untouched).
    pub fn degenerate_at(at: f64) -> Self {
        SearchSettings { lo: at, hi: at, ..Default::default() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    pub(crate) fn rastrigin(x: &[f64]) -> f64 {
        10.0 * x.len() as f64 + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
    }

    #[test]
    fn sphere() {
        let mut cfg = DeConfig::cube(4, -5.0, 5.0, 1);
        cfg.pop_size = 40;
        cfg.max_iter = 300;
        let r = de_minimize(|x| x.iter().map(|v| v * v).sum(), &cfg).unwrap();
        assert!(r.value < 1e-6, "value {}", r.value);
    }

    #[test]
    fn rastrigin_2d() {
        let mut cfg = DeConfig::cube(2, -5.12, 5.12, 3);
        cfg.pop_size = 50;
        cfg.max_iter = 800;
        cfg.tol_stall = 800;
        let r = de_minimize(rastrigin, &cfg).unwrap();
        assert!(r.value < 1e-3, "value {}", r.value);
    }

    #[test]
    fn degenerate_box() {
        let cfg = DeConfig::new(vec![(1.5, 1.5), (-2.0, -2.0)], 0);
        let r = de_minimize(|x| x[0] + x[1], &cfg).unwrap();
        assert_eq!(r.argmin, vec![1.5, -2.0]);
        assert_eq!(r.evals, 1);
        assert_eq!(r.generations, 0);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = DeConfig::cube(2, -1.0, 1.0, 0);
        cfg.pop_size = 3;
        assert!(de_minimize(|_| 0.0, &cfg).is_err());
        let cfg = DeConfig::new(vec![(1.0, -1.0)], 0);
        assert!(de_minimize(|_| 0.0, &cfg).is_err());
        let mut cfg = DeConfig::cube(2, -1.0, 1.0, 0);
        cfg.crossover = 1.5;
        assert!(de_minimize(|_| 0.0, &cfg).is_err());
    }

    #[test]
    fn nan_objective_is_an_error() {
        let cfg = DeConfig::cube(2, -1.0, 1.0, 0);
        assert!(matches!(de_minimize(|_| f64::NAN, &cfg), Err(Error::NonFinite(_))));
    }

    #[test]
    fn maximize_flips_sign() {
        let cfg = DeConfig::cube(1, -3.0, 3.0, 9);
        let r = de_maximize(|x| -(x[0] - 1.0).powi(2), &cfg).unwrap();
        assert!((r.argmin[0] - 1.0).abs() < 1e-3);
        assert!(r.value <= 0.0 && r.value > -1e-6);
    }
}
