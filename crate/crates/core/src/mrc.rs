//! Two-step localized maximum rank correlation for cross sections, its
//! nonparametric bootstrap, and the criterion-based bundle-effect test.
//!
//! Step one estimates the stand-alone index coefficients β by matching pairs
//! of agents on the other good's covariates and on W. Step two matches on the
//! two estimated stand-alone indices and estimates the bundle coefficients γ.

use serde::{Deserialize, Serialize};

use crate::data::{Alternative, ChoiceSample};
use crate::error::{Error, Result};
use crate::kernels::{BandwidthRule, KernelSpec, bandwidth, column_bandwidths};
use crate::optimizer::SearchSettings;
use crate::par;
use crate::signsum::{self, SignSum, sgn};
use crate::stats::{derive_seed, multiplicities, percentile_ci, quantile, resample_indices, rng_from_seed, std_dev};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MrcConfig {
    pub kernel_step1: KernelSpec,
    pub kernel_step2: KernelSpec,
    pub c1: f64,
    pub c2: f64,
    pub search: SearchSettings,
    pub seed: u64,
    pub bootstrap_b: usize,
}

impl Default for MrcConfig {
    fn default() -> Self {
        MrcConfig {
            kernel_step1: KernelSpec::SIXTH,
            kernel_step2: KernelSpec::FOURTH,
            c1: 1.0,
            c2: 2.0,
            search: SearchSettings::default(),
            seed: 0,
            bootstrap_b: 299,
        }
    }
}

impl MrcConfig {
    /// Checks the kernel orders against the number of matched coordinates.
    pub fn validate(&self, k1: usize, k2: usize) -> Result<()> {
        if self.kernel_step1.order() as usize <= k1 + k2 {
            return Err(Error::config(format!(
                "first-step kernel order {} must exceed the {} matched coordinates",
                self.kernel_step1.order(),
                k1 + k2
            )));
        }
        if self.kernel_step2.order() <= 2 {
            return Err(Error::config("second-step kernel order must exceed 2"));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::config("bandwidth constants must be positive"));
        }
        Ok(())
    }
}

/// Per-coordinate first-step bandwidths for the X₁, X₂ and W blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step1Bandwidths {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub w: Vec<f64>,
}

impl Step1Bandwidths {
    /// `c1 σ̂ N^{-1/8} ln(N)^{1/6}` with σ̂ the standard deviation of each
    /// observed column.
    pub fn from_sample(sample: &ChoiceSample, c1: f64) -> Result<Self> {
        let n = sample.n();
        let scales = |data: &[f64], k: usize| -> Vec<f64> {
            (0..k).map(|c| std_dev(&ChoiceSample::column(data, k, c))).collect()
        };
        Ok(Step1Bandwidths {
            x1: column_bandwidths(BandwidthRule::MrcStep1, n, c1, &scales(&sample.x1, sample.k1), &sample.discrete_x)?,
            x2: column_bandwidths(BandwidthRule::MrcStep1, n, c1, &scales(&sample.x2, sample.k1), &sample.discrete_x)?,
            w: column_bandwidths(BandwidthRule::MrcStep1, n, c1, &scales(&sample.w, sample.k2), &sample.discrete_w)?,
        })
    }
}

#[inline]
fn block_weight(a: &[f64], b: &[f64], h: &[f64], discrete: &[bool], k: KernelSpec) -> f64 {
    let mut w = 1.0;
    for j in 0..a.len() {
        let d = a[j] - b[j];
        if discrete[j] {
            if d != 0.0 {
                return 0.0;
            }
        } else {
            w *= k.scaled(d, h[j]);
        }
    }
    w
}

#[inline]
fn parity(bit: u8) -> f64 {
    if bit == 0 { 1.0 } else { -1.0 }
}

/// Sign terms of the first-step criterion over full β vectors.
pub fn beta_terms(sample: &ChoiceSample, h: &Step1Bandwidths, kernel: KernelSpec) -> Result<SignSum> {
    let (n, k1) = (sample.n(), sample.k1);
    if h.x1.len() != k1 || h.x2.len() != k1 || h.w.len() != sample.k2 {
        return Err(Error::dimension("first-step bandwidths", k1, h.x1.len()));
    }
    let parts = par::map_range(n, |i| {
        let mut part = SignSum::new(k1);
        let mut diff1 = vec![0.0; k1];
        let mut diff2 = vec![0.0; k1];
        let (ai, x1i, x2i, wi) = (sample.choices[i], sample.x1_row(i), sample.x2_row(i), sample.w_row(i));
        for m in i + 1..n {
            let am = sample.choices[m];
            // Σ_d (Y_md − Y_id)(−1)^{d₁} and the same with d₂.
            let c1 = parity(am.d1()) - parity(ai.d1());
            let c2 = parity(am.d2()) - parity(ai.d2());
            if c1 == 0.0 && c2 == 0.0 {
                continue;
            }
            let kw = block_weight(wi, sample.w_row(m), &h.w, &sample.discrete_w, kernel);
            if kw == 0.0 {
                continue;
            }
            let (x1m, x2m) = (sample.x1_row(m), sample.x2_row(m));
            for j in 0..k1 {
                diff1[j] = x1i[j] - x1m[j];
                diff2[j] = x2i[j] - x2m[j];
            }
            if c1 != 0.0 {
                let w2 = kw * block_weight(x2i, x2m, &h.x2, &sample.discrete_x, kernel);
                part.push(&diff1, w2 * c1, i);
            }
            if c2 != 0.0 {
                let w1 = kw * block_weight(x1i, x1m, &h.x1, &sample.discrete_x, kernel);
                part.push(&diff2, w1 * c2, i);
            }
        }
        part
    });
    Ok(SignSum::concat(k1, parts))
}

fn full(free: &[f64]) -> Vec<f64> {
    std::iter::once(1.0).chain(free.iter().copied()).collect()
}

fn check_free(what: &'static str, free: &[f64], k: usize) -> Result<()> {
    if free.len() + 1 != k {
        return Err(Error::dimension(what, k - 1, free.len()));
    }
    Ok(())
}

/// First-step criterion at `b = (1, b_free)`.
pub fn criterion_beta(sample: &ChoiceSample, b_free: &[f64], h: &Step1Bandwidths, kernel: KernelSpec) -> Result<f64> {
    check_free("b_free", b_free, sample.k1)?;
    Ok(beta_terms(sample, h, kernel)?.value(&full(b_free)))
}

/// Fitted stand-alone indices `(X₁'β, X₂'β)` per row.
pub fn fitted_indices(sample: &ChoiceSample, beta_free: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let b = full(beta_free);
    let idx = |row: &[f64]| row.iter().zip(&b).map(|(x, c)| x * c).sum::<f64>();
    (0..sample.n()).map(|i| (idx(sample.x1_row(i)), idx(sample.x2_row(i)))).unzip()
}

/// Second-step bandwidths `c2 σ̂ N^{-1/4} ln(N)^{1/4}`, one per fitted index.
pub fn step2_bandwidths(sample: &ChoiceSample, beta_free: &[f64], c2: f64) -> Result<[f64; 2]> {
    let (v1, v2) = fitted_indices(sample, beta_free);
    let n = sample.n();
    let scale = |v: &[f64]| {
        let s = std_dev(v);
        if s > 0.0 { s } else { 1.0 }
    };
    Ok([
        bandwidth(BandwidthRule::MrcStep2, n, c2, scale(&v1))?,
        bandwidth(BandwidthRule::MrcStep2, n, c2, scale(&v2))?,
    ])
}

#[inline]
fn bundle(a: Alternative) -> f64 {
    if a == Alternative::Both { 1.0 } else { 0.0 }
}

/// Sign terms of the second-step criterion over full γ vectors.
pub fn gamma_terms(sample: &ChoiceSample, beta_free: &[f64], sigma: [f64; 2], kernel: KernelSpec) -> Result<SignSum> {
    check_free("beta_free", beta_free, sample.k1)?;
    if !(sigma[0] > 0.0 && sigma[1] > 0.0) {
        return Err(Error::config("second-step bandwidths must be positive"));
    }
    let (v1, v2) = fitted_indices(sample, beta_free);
    let (n, k2) = (sample.n(), sample.k2);
    let parts = par::map_range(n, |i| {
        let mut part = SignSum::new(k2);
        let mut dw = vec![0.0; k2];
        let yi = bundle(sample.choices[i]);
        let wi = sample.w_row(i);
        for m in i + 1..n {
            let dy = yi - bundle(sample.choices[m]);
            if dy == 0.0 {
                continue;
            }
            let k = kernel.scaled(v1[i] - v1[m], sigma[0]) * kernel.scaled(v2[i] - v2[m], sigma[1]);
            for (j, d) in dw.iter_mut().enumerate() {
                *d = wi[j] - sample.w_row(m)[j];
            }
            part.push(&dw, k * dy, i);
        }
        part
    });
    Ok(SignSum::concat(k2, parts))
}

/// Second-step criterion at `r = (1, r_free)` given first-step estimates.
pub fn criterion_gamma(
    sample: &ChoiceSample,
    r_free: &[f64],
    beta_hat_free: &[f64],
    sigma: [f64; 2],
    kernel: KernelSpec,
) -> Result<f64> {
    check_free("r_free", r_free, sample.k2)?;
    Ok(gamma_terms(sample, beta_hat_free, sigma, kernel)?.value(&full(r_free)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MrcEstimate {
    pub beta_free: Vec<f64>,
    pub gamma_free: Vec<f64>,
    pub criterion_beta: f64,
    pub criterion_gamma: f64,
    pub h: Step1Bandwidths,
    pub sigma: [f64; 2],
    pub bootstrap_draws: Option<Vec<(Vec<f64>, Vec<f64>)>>,
}

pub fn estimate_mrc(sample: &ChoiceSample, config: &MrcConfig) -> Result<MrcEstimate> {
    if sample.n() < 10 {
        return Err(Error::config(format!("MRC needs N >= 10, got {}", sample.n())));
    }
    config.validate(sample.k1, sample.k2)?;
    let h = Step1Bandwidths::from_sample(sample, config.c1)?;
    let terms = beta_terms(sample, &h, config.kernel_step1)?;
    let de1 = config.search.de_config(sample.k1 - 1, derive_seed(config.seed, 0xB1, 0));
    let (beta_free, cb) = signsum::maximize(&terms, None, &de1)?;
    drop(terms);
    let sigma = step2_bandwidths(sample, &beta_free, config.c2)?;
    let terms = gamma_terms(sample, &beta_free, sigma, config.kernel_step2)?;
    let de2 = config.search.de_config(sample.k2 - 1, derive_seed(config.seed, 0xB2, 0));
    let (gamma_free, cg) = signsum::maximize(&terms, None, &de2)?;
    Ok(MrcEstimate {
        beta_free,
        gamma_free,
        criterion_beta: cb,
        criterion_gamma: cg,
        h,
        sigma,
        bootstrap_draws: None,
    })
}

/// Nonparametric bootstrap: `B` resamples of rows with replacement, each
/// re-running both steps (bandwidths included) on the resample.
pub fn bootstrap_mrc(sample: &ChoiceSample, config: &MrcConfig, seed: u64) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let n = sample.n();
    bootstrap_mrc_with(sample, config, |b| resample_indices(&mut rng_from_seed(derive_seed(seed, 0xB0, b as u64)), n))
}

/// Bootstrap with caller-supplied resample indices for draw `b`.
pub fn bootstrap_mrc_with(
    sample: &ChoiceSample,
    config: &MrcConfig,
    draw: impl Fn(usize) -> Vec<usize> + Sync + Send,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if config.bootstrap_b < 10 {
        return Err(Error::config(format!("bootstrap needs B >= 10, got {}", config.bootstrap_b)));
    }
    par::map_range(config.bootstrap_b, |b| {
        let resample = sample.select(&draw(b));
        let cfg = MrcConfig { seed: derive_seed(config.seed, 0xB3, b as u64), ..config.clone() };
        estimate_mrc(&resample, &cfg).map(|e| (e.beta_free, e.gamma_free))
    })
    .into_iter()
    .collect()
}

/// Per-coefficient 95% percentile intervals `(β intervals, γ intervals)`.
pub fn bootstrap_intervals(draws: &[(Vec<f64>, Vec<f64>)]) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let ci = |get: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| {
        let k = draws.first().map_or(0, |d| get(d).len());
        (0..k)
            .map(|j| percentile_ci(&draws.iter().map(|d| get(d)[j]).collect::<Vec<_>>(), 0.95))
            .collect::<Vec<_>>()
    };
    (ci(&|d| &d.0), ci(&|d| &d.1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub stat: f64,
    pub q05: f64,
    pub bundle_effect_detected: bool,
    pub bootstrap_stats: Vec<f64>,
}

/// Pair contributions `K(·/σ₁)K(·/σ₂)(Y_i(1,1) − Y_m(1,1)) sgn(W_im'γ̂)` for
/// i < m, stored sparsely.
struct PairTable {
    pairs: Vec<(u32, u32, f64)>,
    scale: f64,
}

impl PairTable {
    fn build(sample: &ChoiceSample, est: &MrcEstimate, kernel: KernelSpec) -> PairTable {
        let (v1, v2) = fitted_indices(sample, &est.beta_free);
        let g = full(&est.gamma_free);
        let n = sample.n();
        let sigma = est.sigma;
        let parts = par::map_range(n, |i| {
            let yi = bundle(sample.choices[i]);
            let wi = sample.w_row(i);
            let mut out = Vec::new();
            for m in i + 1..n {
                let dy = yi - bundle(sample.choices[m]);
                if dy == 0.0 {
                    continue;
                }
                let s = sgn(wi.iter().zip(sample.w_row(m)).zip(&g).map(|((a, b), c)| (a - b) * c).sum());
                let k = kernel.eval((v1[i] - v1[m]) / sigma[0]) * kernel.eval((v2[i] - v2[m]) / sigma[1]);
                let t = k * dy * s;
                if t != 0.0 {
                    out.push((i as u32, m as u32, t));
                }
            }
            out
        });
        let nf = n as f64;
        PairTable { pairs: parts.concat(), scale: 1.0 / (sigma[0] * sigma[1] * nf * (nf - 1.0)) }
    }

    /// Statistic on a resample with the given row multiplicities. Each
    /// unordered pair counts twice, once per ordering.
    fn stat(&self, mult: Option<&[f64]>) -> f64 {
        let sum = par::sum_chunked(self.pairs.len(), |r| {
            self.pairs[r]
                .iter()
                .map(|&(a, b, t)| match mult {
                    Some(m) => m[a as usize] * m[b as usize] * t,
                    None => t,
                })
                .sum()
        });
        2.0 * sum * self.scale
    }
}

/// Criterion-based test for a bundle effect with β̂, γ̂ and σ held fixed
/// across bootstrap resamples. The effect is detected when the 5% quantile
/// of the bootstrap statistics is positive.
pub fn test_eta_cross(sample: &ChoiceSample, est: &MrcEstimate, config: &MrcConfig, b: usize, seed: u64) -> Result<TestResult> {
    let n = sample.n();
    test_eta_cross_with(sample, est, config, b, |k| resample_indices(&mut rng_from_seed(derive_seed(seed, 0xE0, k as u64)), n))
}

pub fn test_eta_cross_with(
    sample: &ChoiceSample,
    est: &MrcEstimate,
    config: &MrcConfig,
    b: usize,
    draw: impl Fn(usize) -> Vec<usize> + Sync + Send,
) -> Result<TestResult> {
    if b == 0 {
        return Err(Error::config("test needs at least one bootstrap draw"));
    }
    check_free("beta_free", &est.beta_free, sample.k1)?;
    check_free("gamma_free", &est.gamma_free, sample.k2)?;
    let table = PairTable::build(sample, est, config.kernel_step2);
    let stat = table.stat(None);
    let n = sample.n();
    let boot = par::map_range(b, |k| table.stat(Some(&multiplicities(&draw(k), n))));
    let q05 = quantile(&boot, 0.05);
    Ok(TestResult { stat, q05, bundle_effect_detected: q05 > 0.0, bootstrap_stats: boot })
}
