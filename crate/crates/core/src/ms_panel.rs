//! Localized maximum score for two-period (or longer) panels with fixed
//! effects, the numerical bootstrap, and the panel bundle-effect test.
//!
//! Differencing within an agent removes the fixed effects, so only agents
//! who switch alternatives across periods contribute.

use serde::{Deserialize, Serialize};

use crate::data::{Alternative, PanelChoiceSample};
use crate::error::{Error, Result};
use crate::kernels::{BandwidthRule, KernelSpec, column_bandwidths};
use crate::mrc::TestResult;
use crate::optimizer::SearchSettings;
use crate::par;
use crate::signsum::{self, SignSum};
use crate::stats::{derive_seed, multiplicities, quantile, resample_indices, rng_from_seed, std_dev};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MsConfig {
    pub kernel: KernelSpec,
    pub c3: f64,
    pub c4: f64,
    pub search: SearchSettings,
    pub seed: u64,
    pub bootstrap_b: usize,
}

impl Default for MsConfig {
    fn default() -> Self {
        MsConfig {
            kernel: KernelSpec::SECOND,
            c3: 2.0,
            c4: 2.0,
            search: SearchSettings::default(),
            seed: 0,
            bootstrap_b: 299,
        }
    }
}

/// Per-coordinate bandwidths for the differenced X₁, X₂ and W blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelBandwidths {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub w: Vec<f64>,
}

/// Differenced column `c` of a block over all agents and period pairs.
fn diff_column(panel: &PanelChoiceSample, row: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..panel.n() {
        for (t, s) in panel.period_pairs() {
            out.push(row(i, t) - row(i, s));
        }
    }
    out
}

impl PanelBandwidths {
    /// `c3 σ̂ N^{-1/7} ln(N)^{-1/14}` with σ̂ the standard deviation of each
    /// time-differenced column.
    pub fn from_panel(panel: &PanelChoiceSample, c3: f64) -> Result<Self> {
        let n = panel.n();
        let k1 = panel.k1;
        let sx1: Vec<f64> = (0..k1).map(|c| std_dev(&diff_column(panel, |i, t| panel.x1_row(i, t)[c]))).collect();
        let sx2: Vec<f64> = (0..k1).map(|c| std_dev(&diff_column(panel, |i, t| panel.x2_row(i, t)[c]))).collect();
        let sw: Vec<f64> = (0..panel.k2).map(|c| std_dev(&diff_column(panel, |i, t| panel.w_row(i, t)[c]))).collect();
        Ok(PanelBandwidths {
            x1: column_bandwidths(BandwidthRule::PanelMs, n, c3, &sx1, &panel.discrete_x)?,
            x2: column_bandwidths(BandwidthRule::PanelMs, n, c3, &sx2, &panel.discrete_x)?,
            w: column_bandwidths(BandwidthRule::PanelMs, n, c3, &sw, &panel.discrete_w)?,
        })
    }
}

#[inline]
fn block_weight(d: &[f64], h: &[f64], discrete: &[bool], k: KernelSpec) -> f64 {
    let mut w = 1.0;
    for j in 0..d.len() {
        if discrete[j] {
            if d[j] != 0.0 {
                return 0.0;
            }
        } else {
            w *= k.scaled(d[j], h[j]);
        }
    }
    w
}

#[inline]
fn parity(bit: u8) -> f64 {
    if bit == 0 { 1.0 } else { -1.0 }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Sign terms of the β criterion, owned by agent.
pub fn beta_terms(panel: &PanelChoiceSample, h: &PanelBandwidths, kernel: KernelSpec) -> Result<SignSum> {
    let k1 = panel.k1;
    if h.x1.len() != k1 || h.x2.len() != k1 || h.w.len() != panel.k2 {
        return Err(Error::dimension("panel bandwidths", k1, h.x1.len()));
    }
    let pairs = panel.period_pairs();
    let parts = par::map_range(panel.n(), |i| {
        let mut part = SignSum::new(k1);
        for &(t, s) in &pairs {
            let (at, as_) = (panel.choice(i, t), panel.choice(i, s));
            // Σ_d (Y_ds − Y_dt)(−1)^{d₁} and the same with d₂.
            let c1 = parity(as_.d1()) - parity(at.d1());
            let c2 = parity(as_.d2()) - parity(at.d2());
            if c1 == 0.0 && c2 == 0.0 {
                continue;
            }
            let dw = sub(panel.w_row(i, t), panel.w_row(i, s));
            let kw = block_weight(&dw, &h.w, &panel.discrete_w, kernel);
            if kw == 0.0 {
                continue;
            }
            let d1 = sub(panel.x1_row(i, t), panel.x1_row(i, s));
            let d2 = sub(panel.x2_row(i, t), panel.x2_row(i, s));
            if c1 != 0.0 {
                part.push(&d1, kw * block_weight(&d2, &h.x2, &panel.discrete_x, kernel) * c1, i);
            }
            if c2 != 0.0 {
                part.push(&d2, kw * block_weight(&d1, &h.x1, &panel.discrete_x, kernel) * c2, i);
            }
        }
        part
    });
    Ok(SignSum::concat(k1, parts))
}

#[inline]
fn bundle(a: Alternative) -> f64 {
    if a == Alternative::Both { 1.0 } else { 0.0 }
}

/// Sign terms of the γ criterion, owned by agent. Matching is on the raw
/// differenced X₁ and X₂ (2k₁ coordinates).
pub fn gamma_terms(panel: &PanelChoiceSample, h: &PanelBandwidths, kernel: KernelSpec) -> Result<SignSum> {
    let k2 = panel.k2;
    if h.x1.len() != panel.k1 || h.x2.len() != panel.k1 {
        return Err(Error::dimension("panel bandwidths", panel.k1, h.x1.len()));
    }
    let pairs = panel.period_pairs();
    let parts = par::map_range(panel.n(), |i| {
        let mut part = SignSum::new(k2);
        for &(t, s) in &pairs {
            let dy = bundle(panel.choice(i, t)) - bundle(panel.choice(i, s));
            if dy == 0.0 {
                continue;
            }
            let d1 = sub(panel.x1_row(i, t), panel.x1_row(i, s));
            let d2 = sub(panel.x2_row(i, t), panel.x2_row(i, s));
            let k = block_weight(&d1, &h.x1, &panel.discrete_x, kernel) * block_weight(&d2, &h.x2, &panel.discrete_x, kernel);
            part.push(&sub(panel.w_row(i, t), panel.w_row(i, s)), k * dy, i);
        }
        part
    });
    Ok(SignSum::concat(k2, parts))
}

fn full(free: &[f64]) -> Vec<f64> {
    std::iter::once(1.0).chain(free.iter().copied()).collect()
}

pub fn criterion_beta_panel(panel: &PanelChoiceSample, b_free: &[f64], h: &PanelBandwidths, kernel: KernelSpec) -> Result<f64> {
    if b_free.len() + 1 != panel.k1 {
        return Err(Error::dimension("b_free", panel.k1 - 1, b_free.len()));
    }
    Ok(beta_terms(panel, h, kernel)?.value(&full(b_free)))
}

pub fn criterion_gamma_panel(panel: &PanelChoiceSample, r_free: &[f64], h: &PanelBandwidths, kernel: KernelSpec) -> Result<f64> {
    if r_free.len() + 1 != panel.k2 {
        return Err(Error::dimension("r_free", panel.k2 - 1, r_free.len()));
    }
    Ok(gamma_terms(panel, h, kernel)?.value(&full(r_free)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsEstimate {
    pub beta_free: Vec<f64>,
    pub gamma_free: Vec<f64>,
    pub criterion_beta: f64,
    pub criterion_gamma: f64,
    pub h: PanelBandwidths,
}

/// Maximizes both criteria; the γ step does not use β̂.
pub fn estimate_ms(panel: &PanelChoiceSample, config: &MsConfig) -> Result<MsEstimate> {
    if panel.n() < 50 {
        return Err(Error::config(format!("panel MS needs N >= 50, got {}", panel.n())));
    }
    if !(config.c3 > 0.0) {
        return Err(Error::config("c3 must be positive"));
    }
    let h = PanelBandwidths::from_panel(panel, config.c3)?;
    let bt = beta_terms(panel, &h, config.kernel)?;
    let (beta_free, cb) = signsum::maximize(&bt, None, &config.search.de_config(panel.k1 - 1, derive_seed(config.seed, 0x3B, 0)))?;
    let gt = gamma_terms(panel, &h, config.kernel)?;
    let (gamma_free, cg) = signsum::maximize(&gt, None, &config.search.de_config(panel.k2 - 1, derive_seed(config.seed, 0x3C, 0)))?;
    Ok(MsEstimate { beta_free, gamma_free, criterion_beta: cb, criterion_gamma: cg, h })
}

/// `c4 N^{-5/7} ln(N)^{-5/14}`.
pub fn numerical_bootstrap_epsilon(n: usize, c4: f64) -> Result<f64> {
    if n < 2 || !(c4 > 0.0) {
        return Err(Error::config("epsilon needs N >= 2 and c4 > 0"));
    }
    let nf = n as f64;
    Ok(c4 * nf.powf(-5.0 / 7.0) * nf.ln().powf(-5.0 / 14.0))
}

/// Per-agent weights of the numerical bootstrap objective
/// `Σ_i φ_i + √(Nε)·(Σ_i n_i φ_i − Σ_i φ_i)`, i.e. `(1 − w) + w n_i` with
/// `w = √(Nε)`. When Nε is within 1e-12 of one, `w` is set to exactly one so
/// the weights equal the multiplicities.
pub fn numerical_bootstrap_weights(mult: &[f64], epsilon: f64) -> Vec<f64> {
    let ne = mult.len() as f64 * epsilon;
    let w = if (ne - 1.0).abs() < 1e-12 { 1.0 } else { ne.sqrt() };
    mult.iter().map(|&m| (1.0 - w) + w * m).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericalBootstrap {
    pub epsilon: f64,
    pub draws: Vec<(Vec<f64>, Vec<f64>)>,
    pub beta_ci: Vec<(f64, f64)>,
    pub gamma_ci: Vec<(f64, f64)>,
}

/// Root interval `[θ̂ − s q*_{0.975}, θ̂ − s q*_{0.025}]` with
/// `s = (Nε)^{-1/3}` and q* quantiles of θ̂* − θ̂.
pub fn root_interval(point: f64, draws: &[f64], n: usize, epsilon: f64) -> (f64, f64) {
    let dev: Vec<f64> = draws.iter().map(|d| d - point).collect();
    let s = (n as f64 * epsilon).powf(-1.0 / 3.0);
    (point - s * quantile(&dev, 0.975), point - s * quantile(&dev, 0.025))
}

pub fn numerical_bootstrap_ms(panel: &PanelChoiceSample, config: &MsConfig, point: &MsEstimate, seed: u64) -> Result<NumericalBootstrap> {
    let n = panel.n();
    let eps = numerical_bootstrap_epsilon(n, config.c4)?;
    numerical_bootstrap_ms_with(panel, config, point, eps, |b| {
        resample_indices(&mut rng_from_seed(derive_seed(seed, 0x3D, b as u64)), n)
    })
}

/// Numerical bootstrap with an explicit ε and caller-supplied agent
/// resamples. Bandwidths stay at their full-sample values.
pub fn numerical_bootstrap_ms_with(
    panel: &PanelChoiceSample,
    config: &MsConfig,
    point: &MsEstimate,
    epsilon: f64,
    draw: impl Fn(usize) -> Vec<usize> + Sync + Send,
) -> Result<NumericalBootstrap> {
    if config.bootstrap_b < 10 {
        return Err(Error::config(format!("bootstrap needs B >= 10, got {}", config.bootstrap_b)));
    }
    if !(epsilon > 0.0) {
        return Err(Error::config("epsilon must be positive"));
    }
    let n = panel.n();
    let bt = beta_terms(panel, &point.h, config.kernel)?;
    let gt = gamma_terms(panel, &point.h, config.kernel)?;
    let draws = par::map_range(config.bootstrap_b, |b| -> Result<(Vec<f64>, Vec<f64>)> {
        let weights = numerical_bootstrap_weights(&multiplicities(&draw(b), n), epsilon);
        let de_b = config.search.de_config(panel.k1 - 1, derive_seed(config.seed, 0x3E, b as u64));
        let de_g = config.search.de_config(panel.k2 - 1, derive_seed(config.seed, 0x3F, b as u64));
        let (beta, _) = signsum::maximize(&bt, Some(&weights), &de_b)?;
        let (gamma, _) = signsum::maximize(&gt, Some(&weights), &de_g)?;
        Ok((beta, gamma))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let ci = |at: f64, get: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> f64| {
        let v: Vec<f64> = draws.iter().map(get).collect();
        root_interval(at, &v, n, epsilon)
    };
    let beta_ci = (0..point.beta_free.len()).map(|j| ci(point.beta_free[j], &|d| d.0[j])).collect();
    let gamma_ci = (0..point.gamma_free.len()).map(|j| ci(point.gamma_free[j], &|d| d.1[j])).collect();
    Ok(NumericalBootstrap { epsilon, draws, beta_ci, gamma_ci })
}

/// Panel bundle-effect test: statistic `N⁻¹ Σ_i φ_i(γ̂)` from the γ
/// criterion, with agent-level bootstrap resamples and γ̂ fixed.
pub fn test_eta_panel(panel: &PanelChoiceSample, gamma_hat_free: &[f64], config: &MsConfig, b: usize, seed: u64) -> Result<TestResult> {
    let n = panel.n();
    test_eta_panel_with(panel, gamma_hat_free, config, b, |k| {
        resample_indices(&mut rng_from_seed(derive_seed(seed, 0x3A, k as u64)), n)
    })
}

pub fn test_eta_panel_with(
    panel: &PanelChoiceSample,
    gamma_hat_free: &[f64],
    config: &MsConfig,
    b: usize,
    draw: impl Fn(usize) -> Vec<usize> + Sync + Send,
) -> Result<TestResult> {
    if b == 0 {
        return Err(Error::config("test needs at least one bootstrap draw"));
    }
    if gamma_hat_free.len() + 1 != panel.k2 {
        return Err(Error::dimension("gamma_free", panel.k2 - 1, gamma_hat_free.len()));
    }
    let n = panel.n();
    let h = PanelBandwidths::from_panel(panel, config.c3)?;
    let g = full(gamma_hat_free);
    let gt = gamma_terms(panel, &h, config.kernel)?;
    let nf = n as f64;
    let stat = gt.value(&g) / nf;
    let boot = par::map_range(b, |k| gt.value_reweighted(&g, &multiplicities(&draw(k), n)) / nf);
    let q05 = quantile(&boot, 0.05);
    Ok(TestResult { stat, q05, bundle_effect_detected: q05 > 0.0, bootstrap_stats: boot })
}
