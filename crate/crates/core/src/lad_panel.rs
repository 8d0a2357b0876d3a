//! Panel LAD: network first stage on both periods' covariates, then the
//! within-agent analogue of the cross-sectional LAD criterion.

use serde::{Deserialize, Serialize};

use crate::data::PanelChoiceSample;
use crate::dgp::{Design, ModelParams, oracle_panel_ccp_sample};
use crate::error::{Error, Result};
use crate::lad::{full_coefficients, index_triple, pair_loss};
use crate::mlp::{GROUP, Mlp, Target, TrainConfig, train};
use crate::optimizer::{SearchSettings, de_minimize};
use crate::par;
use crate::stats::derive_seed;

/// How the first stage splits the two periods of a pair across networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetLayout {
    /// One network per period, each predicting that period's probabilities
    /// from `(Z_t, Z_s)`.
    #[default]
    PerPeriod,
    /// A single network with one softmax group per period.
    Joint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelLadConfig {
    pub mlp: TrainConfig,
    pub layout: NetLayout,
    pub include_rho_b: bool,
    pub search: SearchSettings,
    pub seed: u64,
}

impl Default for PanelLadConfig {
    fn default() -> Self {
        PanelLadConfig { mlp: TrainConfig::default(), layout: NetLayout::default(), include_rho_b: false, search: SearchSettings::default(), seed: 0 }
    }
}

/// First-stage probabilities for every agent and period pair `(t, s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelCcp {
    pub pairs: Vec<(usize, usize)>,
    /// Indexed `agent * pairs.len() + pair`; holds `[p_t, p_s]`.
    pub p: Vec<[[f64; 4]; 2]>,
    /// Trained networks, kept for diagnostics.
    pub nets: Vec<Mlp>,
}

impl PanelCcp {
    pub fn get(&self, agent: usize, pair: usize) -> &[[f64; 4]; 2] {
        &self.p[agent * self.pairs.len() + pair]
    }

    /// `Δp̂_d = p_t[d] − p_s[d]`.
    pub fn delta(&self, agent: usize, pair: usize) -> [f64; 4] {
        let [pt, ps] = self.get(agent, pair);
        [0, 1, 2, 3].map(|d| pt[d] - ps[d])
    }
}

fn stacked_input(panel: &PanelChoiceSample, i: usize, t: usize, s: usize) -> Vec<f64> {
    [panel.x1_row(i, t), panel.x2_row(i, t), panel.w_row(i, t), panel.s_row(i, t)]
        .into_iter()
        .chain([panel.x1_row(i, s), panel.x2_row(i, s), panel.w_row(i, s), panel.s_row(i, s)])
        .flatten()
        .copied()
        .collect()
}

/// Trains the first stage on `(Z_t, Z_s) → (Y_t, Y_s)` over every agent and
/// period pair, then predicts at the same points.
pub fn fit_panel_ccp(panel: &PanelChoiceSample, config: &TrainConfig, layout: NetLayout, seed: u64) -> Result<PanelCcp> {
    let pairs = panel.period_pairs();
    if pairs.is_empty() || panel.n() == 0 {
        return Err(Error::input("first stage needs at least one agent and two periods"));
    }
    let mut inputs = Vec::with_capacity(panel.n() * pairs.len());
    let mut periods = Vec::with_capacity(inputs.capacity());
    for i in 0..panel.n() {
        for &(t, s) in &pairs {
            inputs.push(stacked_input(panel, i, t, s));
            periods.push([panel.choice(i, t).index(), panel.choice(i, s).index()]);
        }
    }
    let one_hot = |cols: &[usize]| -> Target {
        let mut y = vec![0.0; GROUP * cols.len()];
        for (g, &c) in cols.iter().enumerate() {
            y[GROUP * g + c] = 1.0;
        }
        y
    };
    let fit = |targets: Vec<Target>, groups: usize, stream: u64| -> Result<Mlp> {
        let mut net = Mlp::new(inputs[0].len(), &config.hidden, groups, derive_seed(seed, 0x31F, stream))?;
        net.standardize_on(&inputs)?;
        Ok(train(&net, &inputs, &targets, config)?.net)
    };
    let nets = match layout {
        NetLayout::Joint => vec![fit(periods.iter().map(|c| one_hot(c)).collect(), 2, 0)?],
        NetLayout::PerPeriod => {
            let per = par::map_range(2, |k| fit(periods.iter().map(|c| one_hot(&c[k..k + 1])).collect(), 1, 1 + k as u64));
            per.into_iter().collect::<Result<Vec<_>>>()?
        }
    };
    let mut p = Vec::with_capacity(inputs.len());
    for x in &inputs {
        let out: Vec<[f64; 4]> = nets.iter().map(|n| n.forward(x)).collect::<Result<Vec<_>>>()?.concat();
        p.push([out[0], out[1]]);
    }
    Ok(PanelCcp { pairs, p, nets })
}

/// Simulation-oracle probabilities for a two-period design panel.
pub fn oracle_panel_table(design: Design, params: &ModelParams, panel: &PanelChoiceSample, m: usize, seed: u64) -> Result<PanelCcp> {
    let by_period = oracle_panel_ccp_sample(design, params, panel, m, seed)?;
    Ok(PanelCcp { pairs: vec![(1, 0)], p: by_period.into_iter().map(|[p0, p1]| [p1, p0]).collect(), nets: Vec::new() })
}

fn check(panel: &PanelChoiceSample, ccp: &PanelCcp, theta: &ModelParams) -> Result<()> {
    if ccp.pairs != panel.period_pairs() || ccp.p.len() != panel.n() * ccp.pairs.len() {
        return Err(Error::dimension("panel choice probabilities", panel.n() * panel.period_pairs().len(), ccp.p.len()));
    }
    let len = ModelParams::len_for(panel.k1, panel.k2, panel.k3, theta.rho_b.is_some());
    if theta.to_vec().len() != len || theta.beta_free.len() + 1 != panel.k1 || theta.gamma_free.len() + 1 != panel.k2 {
        return Err(Error::dimension("panel LAD parameters", len, theta.to_vec().len()));
    }
    Ok(())
}

/// Sum over agents and period pairs of the four-alternative debiased loss,
/// with indices differenced within agent.
pub fn panel_lad_criterion(panel: &PanelChoiceSample, ccp: &PanelCcp, theta: &ModelParams) -> Result<f64> {
    check(panel, ccp, theta)?;
    Ok(criterion_unchecked(panel, ccp, theta))
}

fn criterion_unchecked(panel: &PanelChoiceSample, ccp: &PanelCcp, theta: &ModelParams) -> f64 {
    let (b, g, rb) = full_coefficients(theta, panel.k3);
    let at = |i: usize, t: usize| {
        index_triple(theta, &b, &g, &rb, panel.x1_row(i, t), panel.x2_row(i, t), panel.w_row(i, t), panel.s_row(i, t))
    };
    par::sum_chunked(panel.n(), |r| {
        let mut acc = 0.0;
        for i in r {
            for (k, &(t, s)) in ccp.pairs.iter().enumerate() {
                let (ut, us) = (at(i, t), at(i, s));
                acc += pair_loss(&[ut[0] - us[0], ut[1] - us[1], ut[2] - us[2]], &ccp.delta(i, k));
            }
        }
        acc
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelLadEstimate {
    pub params: ModelParams,
    pub criterion: f64,
}

pub fn estimate_panel_lad(panel: &PanelChoiceSample, config: &PanelLadConfig) -> Result<PanelLadEstimate> {
    if panel.n() < 100 {
        return Err(Error::config(format!("panel LAD needs N >= 100, got {}", panel.n())));
    }
    let ccp = fit_panel_ccp(panel, &config.mlp, config.layout, config.seed)?;
    estimate_panel_lad_with_ccp(panel, &ccp, config)
}

/// Second stage only, for supplied first-stage probabilities.
pub fn estimate_panel_lad_with_ccp(panel: &PanelChoiceSample, ccp: &PanelCcp, config: &PanelLadConfig) -> Result<PanelLadEstimate> {
    let (k1, k2, k3) = (panel.k1, panel.k2, panel.k3);
    let unpack = |x: &[f64]| ModelParams::from_vec(x, k1, k2, k3, config.include_rho_b).expect("dimension fixed by the box");
    let dim = ModelParams::len_for(k1, k2, k3, config.include_rho_b);
    check(panel, ccp, &unpack(&vec![0.0; dim]))?;
    let de = config.search.de_config(dim, derive_seed(config.seed, 0x1AE, 0));
    let r = de_minimize(|x| criterion_unchecked(panel, ccp, &unpack(x)), &de)?;
    Ok(PanelLadEstimate { params: unpack(&r.argmin), criterion: r.value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Alternative;
    use crate::dgp::simulate_panel;
    use crate::lad::{debiased_loss, lad_indicators};
    use approx::assert_abs_diff_eq;

    fn tiny_panel() -> PanelChoiceSample {
        // Two agents, k1 = k2 = k3 = 1, two periods.
        let x1 = vec![1.0, 0.0, 0.5, -0.5];
        let x2 = vec![-1.0, 0.0, 0.2, 0.4];
        let w = vec![0.0, 0.3, 1.0, 1.0];
        let s = vec![0.0, 0.0, 0.0, 1.0];
        let choices = vec![Alternative::Neither, Alternative::First, Alternative::Both, Alternative::Second];
        PanelChoiceSample::new(2, 1, 1, 1, x1, x2, w, s, choices).unwrap()
    }

    #[test]
    fn hand_enumeration() {
        let panel = tiny_panel();
        let ccp = PanelCcp {
            pairs: vec![(1, 0)],
            p: vec![[[0.1, 0.6, 0.2, 0.1], [0.5, 0.2, 0.2, 0.1]], [[0.1, 0.1, 0.2, 0.6], [0.2, 0.2, 0.5, 0.1]]],
            nets: Vec::new(),
        };
        let theta = ModelParams { beta_free: vec![], gamma_free: vec![], rho1: vec![0.5], rho2: vec![-1.0], rho_b: None };
        // Agent 0: u = (-1, 1, 0.3); agent 1: u = (-1 + 0.5, 0.2 - 1, 0).
        let us = [[-1.0, 1.0, 0.3], [-0.5, -0.8, 0.0]];
        let mut expected = 0.0;
        for (i, u) in us.iter().enumerate() {
            let dp = ccp.delta(i, 0);
            for d in Alternative::ALL {
                let (ip, im) = lad_indicators(u, d);
                expected += debiased_loss(ip, im, dp[d.index()]);
            }
        }
        // Agent 0 hits I⁻ of (1,0) with Δp = 0.4; agent 1 hits I⁺ of (0,0)
        // with Δp = -0.1 and I⁻ of (1,1) with Δp = 0.5.
        assert_abs_diff_eq!(expected, 0.8 + 0.2 + 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(panel_lad_criterion(&panel, &ccp, &theta).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn single_side_example() {
        assert_abs_diff_eq!(debiased_loss(true, false, -0.4), 0.8, epsilon = 1e-15);
        assert_eq!(debiased_loss(false, false, 0.7), 0.0);
    }

    #[test]
    fn identical_agents_give_flat_probabilities() {
        let n = 40;
        let rep = |v: [f64; 2]| (0..n).flat_map(|_| v).collect::<Vec<f64>>();
        let choices = (0..n).flat_map(|_| [Alternative::First, Alternative::First]).collect();
        let panel = PanelChoiceSample::new(2, 1, 1, 1, rep([0.3, 0.3]), rep([1.0, 1.0]), rep([0.0, 0.0]), rep([2.0, 2.0]), choices).unwrap();
        let cfg = TrainConfig { epochs: 300, ..Default::default() };
        for layout in [NetLayout::PerPeriod, NetLayout::Joint] {
            let ccp = fit_panel_ccp(&panel, &cfg, layout, 4).unwrap();
            for i in 0..n {
                for v in ccp.delta(i, 0) {
                    assert!(v.abs() < 1e-6, "{layout:?} {v}");
                }
            }
        }
    }

    #[test]
    fn first_stage_is_deterministic() {
        let panel = simulate_panel(Design::new(3).unwrap(), 120, 8).unwrap();
        let cfg = TrainConfig { epochs: 50, ..Default::default() };
        let fit = || fit_panel_ccp(&panel, &cfg, NetLayout::PerPeriod, 1).unwrap();
        assert_eq!(fit(), fit());
        assert_eq!(fit().nets.len(), 2);
    }

    #[test]
    fn degenerate_box_returns_truth() {
        let panel = simulate_panel(Design::new(3).unwrap(), 100, 2).unwrap();
        let cfg = PanelLadConfig {
            mlp: TrainConfig { epochs: 20, ..Default::default() },
            search: SearchSettings::degenerate_at(1.0),
            ..Default::default()
        };
        assert_eq!(estimate_panel_lad(&panel, &cfg).unwrap().params, ModelParams::design_truth());
    }

    #[test]
    fn small_panels_are_rejected() {
        let panel = simulate_panel(Design::new(3).unwrap(), 50, 2).unwrap();
        assert!(estimate_panel_lad(&panel, &PanelLadConfig::default()).is_err());
    }

    fn network_error(hidden: &[usize], layout: NetLayout) -> (f64, f64) {
        let design = Design::new(3).unwrap();
        let panel = simulate_panel(design, 2000, 31).unwrap();
        let cfg = TrainConfig { hidden: hidden.to_vec(), epochs: 3000, ..Default::default() };
        let ccp = fit_panel_ccp(&panel, &cfg, layout, 0).unwrap();
        let sub: Vec<usize> = (0..2000).step_by(100).collect();
        let oracle = oracle_panel_table(design, &ModelParams::design_truth(), &panel.select(&sub), 20_000, 5).unwrap();
        let (mut err, mut zero) = (0.0, 0.0);
        for (j, &i) in sub.iter().enumerate() {
            let (a, b) = (ccp.delta(i, 0), oracle.delta(j, 0));
            err += (0..4).map(|d| (a[d] - b[d]).abs()).sum::<f64>();
            zero += b.iter().map(|v| v.abs()).sum::<f64>();
        }
        let m = 4.0 * sub.len() as f64;
        (err / m, zero / m)
    }

    #[test]
    fn network_close_to_oracle() {
        let (mae, zero) = network_error(&[3, 3, 3], NetLayout::PerPeriod);
        assert!(mae < 0.10 && mae < zero, "mean abs error {mae}, zero prediction {zero}");
    }

    #[test]
    fn joint_network_beats_zero_prediction() {
        let (mae, zero) = network_error(&[3, 3, 3], NetLayout::Joint);
        assert!(mae < zero, "mean abs error {mae}, zero prediction {zero}");
    }
}
