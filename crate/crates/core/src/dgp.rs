//! Seeded data generation for the four Monte Carlo designs, the latent
//! utility model and the choice rule, and a Monte Carlo oracle for the
//! conditional choice probabilities.
//!
//! Designs 1 and 2 are cross-sectional; Designs 3 and 4 are two-period
//! panels with fixed effects built from the covariates. Each design has an
//! `eta_zero` variant that removes the bundle interaction term.

use rand::Rng;
use rand::distr::Open01;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Alternative, ChoiceSample, PanelChoiceSample};
use crate::error::{Error, Result};
use crate::par;
use crate::stats::{derive_seed, rng_from_seed};

/// Free coefficients. The coefficient on the first column of X and of W is
/// fixed at one and not stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta_free: Vec<f64>,
    pub gamma_free: Vec<f64>,
    pub rho1: Vec<f64>,
    pub rho2: Vec<f64>,
    pub rho_b: Option<Vec<f64>>,
}

impl ModelParams {
    /// True parameters of all four designs: β = γ = ρ₁ = ρ₂ = 1, no ρ_b.
    pub fn design_truth() -> Self {
        ModelParams {
            beta_free: vec![1.0],
            gamma_free: vec![1.0],
            rho1: vec![1.0],
            rho2: vec![1.0],
            rho_b: None,
        }
    }

    pub fn beta_full(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.beta_free.iter().copied()).collect()
    }

    pub fn gamma_full(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.gamma_free.iter().copied()).collect()
    }

    /// Flattens to (β̃, γ̃, ρ₁, ρ₂[, ρ_b]).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend_from_slice(&self.beta_free);
        v.extend_from_slice(&self.gamma_free);
        v.extend_from_slice(&self.rho1);
        v.extend_from_slice(&self.rho2);
        if let Some(rb) = &self.rho_b {
            v.extend_from_slice(rb);
        }
        v
    }

    /// Inverse of [`ModelParams::to_vec`] for blocks of the given widths
    /// (`k1 - 1` free β entries, `k2 - 1` free γ entries, `k3` per ρ).
    pub fn from_vec(v: &[f64], k1: usize, k2: usize, k3: usize, with_rho_b: bool) -> Result<Self> {
        let expected = Self::len_for(k1, k2, k3, with_rho_b);
        if v.len() != expected {
            return Err(Error::dimension("parameter vector", expected, v.len()));
        }
        let (b, rest) = v.split_at(k1 - 1);
        let (g, rest) = rest.split_at(k2 - 1);
        let (r1, rest) = rest.split_at(k3);
        let (r2, rest) = rest.split_at(k3);
        Ok(ModelParams {
            beta_free: b.to_vec(),
            gamma_free: g.to_vec(),
            rho1: r1.to_vec(),
            rho2: r2.to_vec(),
            rho_b: with_rho_b.then(|| rest.to_vec()),
        })
    }

    pub fn len_for(k1: usize, k2: usize, k3: usize, with_rho_b: bool) -> usize {
        (k1 - 1) + (k2 - 1) + 2 * k3 + if with_rho_b { k3 } else { 0 }
    }

    /// Display names matching [`ModelParams::to_vec`].
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |base: &str, len: usize, offset: usize| {
            for j in 0..len {
                if len == 1 {
                    out.push(base.to_string());
                } else {
                    out.push(format!("{base}_{}", j + offset));
                }
            }
        };
        push("beta", self.beta_free.len(), 2);
        push("gamma", self.gamma_free.len(), 2);
        push("rho1", self.rho1.len(), 1);
        push("rho2", self.rho2.len(), 1);
        if let Some(rb) = &self.rho_b {
            push("rho_b", rb.len(), 1);
        }
        out
    }
}

/// Unobservables for one agent (and period). Fixed effects are zero in
/// cross-sectional designs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LatentDraw {
    pub eps1: f64,
    pub eps2: f64,
    pub eta: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha_b: f64,
}

/// Covariates of one agent (or one agent-period).
#[derive(Clone, Copy, Debug)]
pub struct Covariates<'a> {
    pub x1: &'a [f64],
    pub x2: &'a [f64],
    pub w: &'a [f64],
    pub s: &'a [f64],
}

#[inline]
fn index_with_unit_first(x: &[f64], free: &[f64]) -> f64 {
    x[0] + x[1..].iter().zip(free).map(|(a, b)| a * b).sum::<f64>()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Latent utilities over (0,0), (1,0), (0,1), (1,1).
pub fn utilities(params: &ModelParams, z: Covariates<'_>, latent: &LatentDraw) -> [f64; 4] {
    let u1 = index_with_unit_first(z.x1, &params.beta_free) + dot(&params.rho1, z.s) + latent.alpha1 + latent.eps1;
    let u2 = index_with_unit_first(z.x2, &params.beta_free) + dot(&params.rho2, z.s) + latent.alpha2 + latent.eps2;
    let rb = params.rho_b.as_deref().map_or(0.0, |r| dot(r, z.s));
    let bundle = latent.eta * (index_with_unit_first(z.w, &params.gamma_free) + rb + latent.alpha_b);
    [0.0, u1, u2, u1 + u2 + bundle]
}

pub const TIE_TOLERANCE: f64 = 1e-12;

/// Utility-maximizing alternative. Near-ties (within [`TIE_TOLERANCE`]) go to
/// the lowest index; the flag reports whether one occurred.
pub fn choose(u: &[f64; 4]) -> (Alternative, bool) {
    let mut best = 0;
    let mut tie = false;
    for d in 1..4 {
        if u[d] > u[best] + TIE_TOLERANCE {
            best = d;
            tie = false;
        } else if (u[d] - u[best]).abs() <= TIE_TOLERANCE {
            tie = true;
        }
    }
    (Alternative::from_index(best).unwrap(), tie)
}

/// Design identifier plus the no-bundle-effect switch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Design {
    pub id: u8,
    #[serde(default)]
    pub eta_zero: bool,
}

impl Design {
    pub fn new(id: u8) -> Result<Self> {
        if !(1..=4).contains(&id) {
            return Err(Error::config(format!("unknown design {id}; expected 1-4")));
        }
        Ok(Design { id, eta_zero: false })
    }

    pub fn with_eta_zero(mut self, on: bool) -> Self {
        self.eta_zero = on;
        self
    }

    pub fn is_panel(self) -> bool {
        self.id >= 3
    }
}

#[inline]
fn logistic(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.sample(Open01);
    (u / (1.0 - u)).ln()
}

#[inline]
fn bernoulli_third(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<f64>() < 1.0 / 3.0 { 1.0 } else { 0.0 }
}

#[inline]
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn beta22() -> Beta<f64> {
    Beta::new(2.0, 2.0).expect("valid Beta parameters")
}

/// Fills `out` with draws that each equal one shared draw with probability
/// `a` and an independent draw otherwise; pairwise correlation is `a²` and
/// every marginal is that of `draw`.
fn shared_mixture(rng: &mut ChaCha8Rng, a: f64, out: &mut [f64], mut draw: impl FnMut(&mut ChaCha8Rng) -> f64) {
    let common = draw(rng);
    for v in out.iter_mut() {
        let copy = rng.random::<f64>() < a;
        let own = draw(rng);
        *v = if copy { common } else { own };
    }
}

/// Standard normals with pairwise correlation 0.25 via one common factor.
fn equicorrelated_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let z0 = normal(rng);
    let load = 0.75f64.sqrt();
    for v in out.iter_mut() {
        *v = 0.5 * z0 + load * normal(rng);
    }
}

/// One cross-sectional agent's covariates `[x1_1, x1_2, x2_1, x2_2, w_1, w_2, s]`
/// and latent draw.
fn draw_cross_agent(design: Design, rng: &mut ChaCha8Rng, beta: &Beta<f64>) -> ([f64; 7], LatentDraw) {
    let mut z = [0.0; 7];
    let (eps1, eps2);
    if design.id == 1 {
        z[0] = logistic(rng);
        z[1] = bernoulli_third(rng);
        z[2] = logistic(rng);
        z[3] = bernoulli_third(rng);
        z[4] = logistic(rng);
        z[5] = normal(rng);
        z[6] = normal(rng);
        eps1 = normal(rng);
        eps2 = normal(rng);
    } else {
        let a = 0.5f64.sqrt();
        let mut pair = [0.0; 2];
        shared_mixture(rng, a, &mut pair, logistic);
        (z[0], z[2]) = (pair[0], pair[1]);
        shared_mixture(rng, a, &mut pair, bernoulli_third);
        (z[1], z[3]) = (pair[0], pair[1]);
        z[4] = logistic(rng);
        z[5] = normal(rng);
        z[6] = normal(rng);
        let (g1, g2) = (normal(rng), normal(rng));
        eps1 = g1;
        eps2 = 0.5 * g1 + 0.75f64.sqrt() * g2;
    }
    let eta = beta.sample(rng);
    let latent = LatentDraw {
        eps1,
        eps2,
        eta: if design.eta_zero { 0.0 } else { eta },
        ..LatentDraw::default()
    };
    (z, latent)
}

fn cross_covariates(z: &[f64; 7]) -> Covariates<'_> {
    Covariates { x1: &z[0..2], x2: &z[2..4], w: &z[4..6], s: &z[6..7] }
}

/// Simulates Design 1 or 2, reporting the number of near-tie choices.
pub fn simulate_cross_counted(design: Design, n: usize, seed: u64) -> Result<(ChoiceSample, usize)> {
    if !matches!(design.id, 1 | 2) {
        return Err(Error::config(format!("design {} is not cross-sectional", design.id)));
    }
    if n < 2 {
        return Err(Error::config(format!("need N >= 2, got {n}")));
    }
    let params = ModelParams::design_truth();
    let mut rng = rng_from_seed(derive_seed(seed, design.id as u64, 0));
    let beta = beta22();
    let mut x1 = Vec::with_capacity(2 * n);
    let mut x2 = Vec::with_capacity(2 * n);
    let mut w = Vec::with_capacity(2 * n);
    let mut s = Vec::with_capacity(n);
    let mut choices = Vec::with_capacity(n);
    let mut ties = 0;
    for _ in 0..n {
        let (z, latent) = draw_cross_agent(design, &mut rng, &beta);
        let (c, tie) = choose(&utilities(&params, cross_covariates(&z), &latent));
        ties += tie as usize;
        x1.extend_from_slice(&z[0..2]);
        x2.extend_from_slice(&z[2..4]);
        w.extend_from_slice(&z[4..6]);
        s.push(z[6]);
        choices.push(c);
    }
    let sample = ChoiceSample::new(2, 2, 1, x1, x2, w, s, choices)?.with_discrete(
        vec![false, true],
        vec![false, false],
        vec![false],
    )?;
    Ok((sample, ties))
}

pub fn simulate_cross(design: Design, n: usize, seed: u64) -> Result<ChoiceSample> {
    simulate_cross_counted(design, n, seed).map(|(s, _)| s)
}

/// One panel agent: covariates per period `[x1_1, x1_2, x2_1, x2_2, w_1, w_2, s]`
/// and the non-fixed-effect unobservables per period.
struct PanelAgent {
    z: [[f64; 7]; 2],
    eps: [[f64; 2]; 2],
    eta: [f64; 2],
}

fn draw_panel_agent(design: Design, rng: &mut ChaCha8Rng, beta: &Beta<f64>) -> PanelAgent {
    let mut a = PanelAgent { z: [[0.0; 7]; 2], eps: [[0.0; 2]; 2], eta: [0.0; 2] };
    if design.id == 3 {
        for t in 0..2 {
            let z = &mut a.z[t];
            z[0] = logistic(rng);
            z[1] = bernoulli_third(rng);
            z[2] = logistic(rng);
            z[3] = bernoulli_third(rng);
            z[4] = logistic(rng);
            z[5] = normal(rng);
            z[6] = normal(rng);
            a.eps[t] = [normal(rng), normal(rng)];
            a.eta[t] = beta.sample(rng);
        }
    } else {
        // Cells are ordered (j, t) = (1,1), (1,2), (2,1), (2,2).
        let mut cells = [0.0; 4];
        shared_mixture(rng, 0.5, &mut cells, logistic);
        (a.z[0][0], a.z[1][0], a.z[0][2], a.z[1][2]) = (cells[0], cells[1], cells[2], cells[3]);
        shared_mixture(rng, 0.5, &mut cells, bernoulli_third);
        (a.z[0][1], a.z[1][1], a.z[0][3], a.z[1][3]) = (cells[0], cells[1], cells[2], cells[3]);
        equicorrelated_normals(rng, &mut cells);
        a.eps = [[cells[0], cells[2]], [cells[1], cells[3]]];
        let mut serial = [0.0; 2];
        shared_mixture(rng, 0.5, &mut serial, logistic);
        (a.z[0][4], a.z[1][4]) = (serial[0], serial[1]);
        equicorrelated_normals(rng, &mut serial);
        (a.z[0][5], a.z[1][5]) = (serial[0], serial[1]);
        equicorrelated_normals(rng, &mut serial);
        (a.z[0][6], a.z[1][6]) = (serial[0], serial[1]);
        shared_mixture(rng, 0.5, &mut serial, |r| beta.sample(r));
        a.eta = serial;
    }
    if design.eta_zero {
        a.eta = [0.0; 2];
    }
    a
}

/// Fixed effects implied by both periods' covariates.
fn fixed_effects(z1: &[f64; 7], z2: &[f64; 7]) -> (f64, f64, f64) {
    ((z1[0] + z2[0]) / 4.0, (z1[2] + z2[2]) / 4.0, (z1[4] + z2[4]) / 4.0)
}

/// Simulated panel together with the (hidden) fixed effects, for tests.
pub struct PanelWithEffects {
    pub panel: PanelChoiceSample,
    /// Per agent (α₁, α₂, α_b).
    pub alpha: Vec<[f64; 3]>,
    pub ties: usize,
}

pub fn simulate_panel_detailed(design: Design, n: usize, seed: u64) -> Result<PanelWithEffects> {
    if !matches!(design.id, 3 | 4) {
        return Err(Error::config(format!("design {} is not a panel design", design.id)));
    }
    if n < 2 {
        return Err(Error::config(format!("need N >= 2, got {n}")));
    }
    let params = ModelParams::design_truth();
    let mut rng = rng_from_seed(derive_seed(seed, design.id as u64, 0));
    let beta = beta22();
    let rows = 2 * n;
    let mut x1 = Vec::with_capacity(2 * rows);
    let mut x2 = Vec::with_capacity(2 * rows);
    let mut w = Vec::with_capacity(2 * rows);
    let mut s = Vec::with_capacity(rows);
    let mut choices = Vec::with_capacity(rows);
    let mut alpha = Vec::with_capacity(n);
    let mut ties = 0;
    for _ in 0..n {
        let a = draw_panel_agent(design, &mut rng, &beta);
        let (a1, a2, ab) = fixed_effects(&a.z[0], &a.z[1]);
        alpha.push([a1, a2, ab]);
        for t in 0..2 {
            let z = &a.z[t];
            let latent = LatentDraw {
                eps1: a.eps[t][0],
                eps2: a.eps[t][1],
                eta: a.eta[t],
                alpha1: a1,
                alpha2: a2,
                alpha_b: ab,
            };
            let (c, tie) = choose(&utilities(&params, cross_covariates(z), &latent));
            ties += tie as usize;
            x1.extend_from_slice(&z[0..2]);
            x2.extend_from_slice(&z[2..4]);
            w.extend_from_slice(&z[4..6]);
            s.push(z[6]);
            choices.push(c);
        }
    }
    let panel = PanelChoiceSample::new(2, 2, 2, 1, x1, x2, w, s, choices)?.with_discrete(
        vec![false, true],
        vec![false, false],
        vec![false],
    )?;
    Ok(PanelWithEffects { panel, alpha, ties })
}

pub fn simulate_panel(design: Design, n: usize, seed: u64) -> Result<PanelChoiceSample> {
    simulate_panel_detailed(design, n, seed).map(|p| p.panel)
}

/// Monte Carlo choice probabilities at fixed cross-sectional covariates
/// (Designs 1 and 2), redrawing the unobservables `m` times.
pub fn oracle_ccp(design: Design, params: &ModelParams, z: Covariates<'_>, m: usize, seed: u64) -> Result<[f64; 4]> {
    if !matches!(design.id, 1 | 2) {
        return Err(Error::config(format!("design {} is not cross-sectional", design.id)));
    }
    if m == 0 {
        return Err(Error::config("oracle needs at least one draw"));
    }
    let mut rng = rng_from_seed(seed);
    let beta = beta22();
    let mut counts = [0usize; 4];
    let g = 0.75f64.sqrt();
    for _ in 0..m {
        let (e1, e2) = if design.id == 1 {
            (normal(&mut rng), normal(&mut rng))
        } else {
            let (a, b) = (normal(&mut rng), normal(&mut rng));
            (a, 0.5 * a + g * b)
        };
        let eta: f64 = beta.sample(&mut rng);
        let latent = LatentDraw {
            eps1: e1,
            eps2: e2,
            eta: if design.eta_zero { 0.0 } else { eta },
            ..LatentDraw::default()
        };
        counts[choose(&utilities(params, z, &latent)).0.index()] += 1;
    }
    Ok(counts.map(|c| c as f64 / m as f64))
}

/// Oracle choice probabilities for every row of a cross-sectional sample.
pub fn oracle_ccp_sample(
    design: Design,
    params: &ModelParams,
    sample: &ChoiceSample,
    m: usize,
    seed: u64,
) -> Result<Vec<[f64; 4]>> {
    let out = par::map_range(sample.n(), |i| {
        let z = Covariates { x1: sample.x1_row(i), x2: sample.x2_row(i), w: sample.w_row(i), s: sample.s_row(i) };
        oracle_ccp(design, params, z, m, derive_seed(seed, 0x0C, i as u64))
    });
    out.into_iter().collect()
}

/// Monte Carlo choice probabilities in both periods of a two-period panel
/// agent, conditional on both periods' covariates (which pin down the fixed
/// effects). Returns `[p_period1, p_period2]`.
pub fn oracle_panel_ccp(
    design: Design,
    params: &ModelParams,
    z: [Covariates<'_>; 2],
    m: usize,
    seed: u64,
) -> Result<[[f64; 4]; 2]> {
    if !matches!(design.id, 3 | 4) {
        return Err(Error::config(format!("design {} is not a panel design", design.id)));
    }
    if m == 0 {
        return Err(Error::config("oracle needs at least one draw"));
    }
    let a1 = (z[0].x1[0] + z[1].x1[0]) / 4.0;
    let a2 = (z[0].x2[0] + z[1].x2[0]) / 4.0;
    let ab = (z[0].w[0] + z[1].w[0]) / 4.0;
    let mut rng = rng_from_seed(seed);
    let beta = beta22();
    let mut counts = [[0usize; 4]; 2];
    let mut cells = [0.0; 4];
    let mut serial = [0.0; 2];
    for _ in 0..m {
        let (eps, eta) = if design.id == 3 {
            let e = [[normal(&mut rng), normal(&mut rng)], [normal(&mut rng), normal(&mut rng)]];
            (e, [beta.sample(&mut rng), beta.sample(&mut rng)])
        } else {
            equicorrelated_normals(&mut rng, &mut cells);
            shared_mixture(&mut rng, 0.5, &mut serial, |r| beta.sample(r));
            ([[cells[0], cells[2]], [cells[1], cells[3]]], serial)
        };
        for t in 0..2 {
            let latent = LatentDraw {
                eps1: eps[t][0],
                eps2: eps[t][1],
                eta: if design.eta_zero { 0.0 } else { eta[t] },
                alpha1: a1,
                alpha2: a2,
                alpha_b: ab,
            };
            counts[t][choose(&utilities(params, z[t], &latent)).0.index()] += 1;
        }
    }
    Ok(counts.map(|c| c.map(|v| v as f64 / m as f64)))
}

/// Oracle probabilities for every agent of a two-period panel.
pub fn oracle_panel_ccp_sample(
    design: Design,
    params: &ModelParams,
    panel: &PanelChoiceSample,
    m: usize,
    seed: u64,
) -> Result<Vec<[[f64; 4]; 2]>> {
    if panel.periods != 2 {
        return Err(Error::input("panel oracle supports two periods"));
    }
    let cov = |i: usize, t: usize| Covariates {
        x1: panel.x1_row(i, t),
        x2: panel.x2_row(i, t),
        w: panel.w_row(i, t),
        s: panel.s_row(i, t),
    };
    par::map_range(panel.n(), |i| oracle_panel_ccp(design, params, [cov(i, 0), cov(i, 1)], m, derive_seed(seed, 0x0D, i as u64)))
        .into_iter()
        .collect()
}
