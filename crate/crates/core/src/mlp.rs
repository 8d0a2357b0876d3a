//! Small multilayer perceptron for choice probabilities.
//!
//! The network maps a covariate vector to one or more softmax groups of four
//! logits (one group per period it predicts). Hidden units are logistic.
//! Inputs are z-scored with constants stored in the net.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean, rng_from_seed, std_dev};

/// Alternatives per softmax group.
pub const GROUP: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.biases[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Cross-entropy summed over groups.
    #[default]
    CrossEntropy,
    /// Squared error over all outputs.
    Sse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub groups: usize,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
}

/// One target row: a one-hot (or soft) 4-vector per group, concatenated.
pub type Target = Vec<f64>;

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softmax_groups(logits: &[f64]) -> Vec<f64> {
    let mut p = Vec::with_capacity(logits.len());
    for z in logits.chunks(GROUP) {
        let top = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e = z.iter().map(|v| (v - top).exp()).collect::<Vec<_>>();
        let total: f64 = e.iter().sum();
        p.extend(e.iter().map(|v| v / total));
    }
    p
}

impl Mlp {
    /// Network with `groups` softmax groups, Xavier-uniform weights, zero
    /// biases and identity input scaling.
    pub fn new(input: usize, hidden: &[usize], groups: usize, seed: u64) -> Result<Self> {
        if input == 0 || groups == 0 || hidden.contains(&0) {
            return Err(Error::config("layer widths and group count must be positive"));
        }
        let mut rng = rng_from_seed(seed);
        let widths: Vec<usize> = std::iter::once(input).chain(hidden.iter().copied()).chain([GROUP * groups]).collect();
        let layers = widths
            .windows(2)
            .map(|w| {
                let mut layer = Layer::zeros(w[0], w[1]);
                let a = (6.0 / (w[0] + w[1]) as f64).sqrt();
                for v in &mut layer.weights {
                    *v = rng.random_range(-a..a);
                }
                layer
            })
            .collect();
        Ok(Mlp { layers, groups, input_mean: vec![0.0; input], input_scale: vec![1.0; input] })
    }

    pub fn input_width(&self) -> usize {
        self.input_mean.len()
    }

    /// Sets the z-score constants from the columns of `inputs`. Constant
    /// columns keep unit scale.
    pub fn standardize_on(&mut self, inputs: &[Vec<f64>]) -> Result<()> {
        self.check_inputs(inputs)?;
        for j in 0..self.input_width() {
            let col: Vec<f64> = inputs.iter().map(|x| x[j]).collect();
            let sd = if col.len() > 1 { std_dev(&col) } else { 0.0 };
            self.input_mean[j] = mean(&col);
            self.input_scale[j] = if sd > 0.0 { sd } else { 1.0 };
        }
        Ok(())
    }

    fn check_inputs(&self, inputs: &[Vec<f64>]) -> Result<()> {
        match inputs.iter().find(|x| x.len() != self.input_width()) {
            Some(x) => Err(Error::dimension("network input", self.input_width(), x.len())),
            None => Ok(()),
        }
    }

    fn scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.input_mean).zip(&self.input_scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    /// Activations of every layer for one scaled input; the last entry holds
    /// the output logits.
    fn activations(&self, x: Vec<f64>) -> Vec<Vec<f64>> {
        let mut acts = vec![x];
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.apply(&acts[l], &mut z);
            if l < last {
                z.iter_mut().for_each(|v| *v = logistic(*v));
            }
            acts.push(z);
        }
        acts
    }

    /// Output probabilities, one 4-vector per group.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<[f64; 4]>> {
        if x.len() != self.input_width() {
            return Err(Error::dimension("network input", self.input_width(), x.len()));
        }
        let p = self.predict_unchecked(x);
        Ok(p.chunks(GROUP).map(|c| [c[0], c[1], c[2], c[3]]).collect())
    }

    fn predict_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let acts = self.activations(self.scaled(x));
        softmax_groups(acts.last().expect("at least one layer"))
    }

    /// Mean loss over the sample.
    pub fn loss(&self, inputs: &[Vec<f64>], targets: &[Target], loss: Loss) -> Result<f64> {
        self.check_batch(inputs, targets)?;
        let total: f64 = inputs.iter().zip(targets).map(|(x, y)| sample_loss(&self.predict_unchecked(x), y, loss)).sum();
        Ok(total / inputs.len() as f64)
    }

    fn check_batch(&self, inputs: &[Vec<f64>], targets: &[Target]) -> Result<()> {
        if inputs.is_empty() {
            return Err(Error::input("training needs at least one sample"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::dimension("targets", inputs.len(), targets.len()));
        }
        if let Some(y) = targets.iter().find(|y| y.len() != GROUP * self.groups) {
            return Err(Error::dimension("target row", GROUP * self.groups, y.len()));
        }
        self.check_inputs(inputs)
    }

    /// Mean loss and its gradient, laid out like the layers.
    pub fn gradient(&self, inputs: &[Vec<f64>], targets: &[Target], loss: Loss) -> Result<(f64, Vec<Layer>)> {
        self.check_batch(inputs, targets)?;
        let mut grads: Vec<Layer> = self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect();
        let mut total = 0.0;
        for (x, y) in inputs.iter().zip(targets) {
            let acts = self.activations(self.scaled(x));
            let p = softmax_groups(acts.last().expect("at least one layer"));
            total += sample_loss(&p, y, loss);
            let mut delta = output_delta(&p, y, loss);
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let input = &acts[l];
                let g = &mut grads[l];
                for o in 0..layer.outputs {
                    g.biases[o] += delta[o];
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, a) in row.iter_mut().zip(input) {
                        *gw += delta[o] * a;
                    }
                }
                if l > 0 {
                    delta = (0..layer.inputs)
                        .map(|i| {
                            let back: f64 = (0..layer.outputs).map(|o| layer.weights[o * layer.inputs + i] * delta[o]).sum();
                            back * input[i] * (1.0 - input[i])
                        })
                        .collect();
                }
            }
        }
        let n = inputs.len() as f64;
        for g in &mut grads {
            g.weights.iter_mut().chain(g.biases.iter_mut()).for_each(|v| *v /= n);
        }
        Ok((total / n, grads))
    }

    /// All weights and biases, layer by layer.
    pub fn params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        let count: usize = self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum();
        if theta.len() != count {
            return Err(Error::dimension("network parameters", count, theta.len()));
        }
        let mut it = theta.iter();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|v| *v = *it.next().expect("length checked"));
        }
        Ok(())
    }
}

pub(crate) fn flatten(layers: &[Layer]) -> Vec<f64> {
    layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect()
}

fn sample_loss(p: &[f64], y: &[f64], loss: Loss) -> f64 {
    match loss {
        Loss::CrossEntropy => -p.iter().zip(y).filter(|(_, t)| **t != 0.0).map(|(q, t)| t * q.max(1e-300).ln()).sum::<f64>(),
        Loss::Sse => p.iter().zip(y).map(|(q, t)| (q - t).powi(2)).sum(),
    }
}

/// Derivative of the per-sample loss with respect to the output logits.
fn output_delta(p: &[f64], y: &[f64], loss: Loss) -> Vec<f64> {
    let mut d = vec![0.0; p.len()];
    for g in 0..p.len() / GROUP {
        let r = GROUP * g..GROUP * (g + 1);
        match loss {
            Loss::CrossEntropy => {
                let mass: f64 = y[r.clone()].iter().sum();
                for k in r {
                    d[k] = p[k] * mass - y[k];
                }
            }
            Loss::Sse => {
                let a: Vec<f64> = r.clone().map(|k| 2.0 * (p[k] - y[k])).collect();
                let avg: f64 = r.clone().zip(&a).map(|(k, v)| p[k] * v).sum();
                for (k, v) in r.zip(&a) {
                    d[k] = p[k] * (v - avg);
                }
            }
        }
    }
    d
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub loss: Loss,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { hidden: vec![3, 3, 3], lr: 0.5, momentum: 0.9, epochs: 2000, loss: Loss::CrossEntropy, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be finite and non-negative, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        Ok(())
    }
}

/// Result of [`train`]: the lowest-loss iterate and the loss before each
/// epoch plus the final loss.
#[derive(Clone, Debug)]
pub struct Trained {
    pub net: Mlp,
    pub trace: Vec<f64>,
}

/// Full-batch gradient descent with momentum. The returned net is the
/// iterate with the smallest loss seen, so its loss never exceeds the
/// starting loss.
pub fn train(net: &Mlp, inputs: &[Vec<f64>], targets: &[Target], config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    let mut current = net.clone();
    let mut theta = current.params();
    let mut velocity = vec![0.0; theta.len()];
    let mut best = (f64::INFINITY, theta.clone());
    let mut trace = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        let (loss, grads) = current.gradient(inputs, targets, config.loss)?;
        trace.push(loss);
        if loss < best.0 {
            best = (loss, theta.clone());
        }
        for ((v, t), g) in velocity.iter_mut().zip(&mut theta).zip(flatten(&grads)) {
            *v = config.momentum * *v - config.lr * g;
            *t += *v;
        }
        current.set_params(&theta)?;
    }
    let last = current.loss(inputs, targets, config.loss)?;
    trace.push(last);
    if last < best.0 {
        best = (last, theta);
    }
    current.set_params(&best.1)?;
    Ok(Trained { net: current, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_hot(t: usize, s: usize) -> Target {
        let mut y = vec![0.0; 2 * GROUP];
        y[t] = 1.0;
        y[4 + s] = 1.0;
        y
    }

    #[test]
    fn zero_weights_give_uniform_groups() {
        let mut net = Mlp::new(3, &[3, 3, 3], 2, 1).unwrap();
        let zeros = vec![0.0; net.params().len()];
        net.set_params(&zeros).unwrap();
        let p = net.forward(&[0.3, -1.0, 2.0]).unwrap();
        let (pt, ps) = (p[0], p[1]);
        for v in pt.iter().chain(&ps) {
            assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn groups_are_on_the_simplex() {
        let net = Mlp::new(4, &[3, 3, 3], 2, 7).unwrap();
        let p = net.forward(&[1.0, 2.0, -3.0, 0.5]).unwrap();
        let (pt, ps) = (p[0], p[1]);
        assert_abs_diff_eq!(pt.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ps.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn single_group_net() {
        let net = Mlp::new(2, &[3], 1, 4).unwrap();
        let p = net.forward(&[0.5, -0.5]).unwrap();
        assert_eq!(p.len(), 1);
        assert_abs_diff_eq!(p[0].iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(net.loss(&[vec![0.5, -0.5]], &[one_hot(0, 0)], Loss::CrossEntropy).is_err());
        assert!(net.loss(&[vec![0.5, -0.5]], &[vec![0.0, 1.0, 0.0, 0.0]], Loss::CrossEntropy).is_ok());
        assert!(Mlp::new(2, &[3], 0, 4).is_err());
    }

    #[test]
    fn tiny_net_by_hand() {
        // One input, one hidden unit with weight 1 and bias 0, output logits
        // equal to k * h for unit k of each group.
        let mut net = Mlp::new(1, &[1], 2, 0).unwrap();
        net.layers[0].weights = vec![1.0];
        net.layers[0].biases = vec![0.0];
        net.layers[1].weights = vec![0.0, 1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0];
        net.layers[1].biases = vec![0.0; 8];
        let h = 1.0 / (1.0 + (-0.5f64).exp());
        let e: Vec<f64> = (0..4).map(|k| (k as f64 * h).exp()).collect();
        let total: f64 = e.iter().sum();
        let p = net.forward(&[0.5]).unwrap();
        let (pt, ps) = (p[0], p[1]);
        for k in 0..4 {
            assert_abs_diff_eq!(pt[k], e[k] / total, epsilon = 1e-14);
            assert_abs_diff_eq!(ps[k], 0.25, epsilon = 1e-14);
        }
    }

    #[test]
    fn lr_zero_leaves_net_unchanged() {
        let net = Mlp::new(2, &[3, 3, 3], 2, 3).unwrap();
        let cfg = TrainConfig { lr: 0.0, epochs: 10, ..Default::default() };
        let out = train(&net, &[vec![0.1, 0.2]], &[one_hot(0, 1)], &cfg).unwrap();
        assert_eq!(out.net, net);
    }

    #[test]
    fn overfits_single_point() {
        let net = Mlp::new(2, &[3, 3, 3], 2, 5).unwrap();
        let cfg = TrainConfig { epochs: 500, ..Default::default() };
        let out = train(&net, &[vec![0.4, -0.7]], &[one_hot(2, 1)], &cfg).unwrap();
        let p = out.net.forward(&[0.4, -0.7]).unwrap();
        let (pt, ps) = (p[0], p[1]);
        assert!(pt[2] > 0.95 && ps[1] > 0.95, "{pt:?} {ps:?}");
        assert!(out.trace.last().unwrap() <= &out.trace[0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for loss in [Loss::CrossEntropy, Loss::Sse] {
            let mut net = Mlp::new(3, &[3, 2], 2, 11).unwrap();
            let inputs = vec![vec![0.2, -0.4, 1.1], vec![-1.0, 0.3, 0.0]];
            let targets = vec![one_hot(1, 3), one_hot(0, 0)];
            let (_, grads) = net.gradient(&inputs, &targets, loss).unwrap();
            let analytic = flatten(&grads);
            let theta = net.params();
            for (j, a) in analytic.iter().enumerate() {
                let mut t = theta.clone();
                t[j] += 1e-5;
                net.set_params(&t).unwrap();
                let up = net.loss(&inputs, &targets, loss).unwrap();
                t[j] -= 2e-5;
                net.set_params(&t).unwrap();
                let down = net.loss(&inputs, &targets, loss).unwrap();
                let numeric = (up - down) / 2e-5;
                assert!((a - numeric).abs() <= 1e-6 * a.abs().max(numeric.abs()).max(1e-3), "{loss:?} {j}: {a} vs {numeric}");
            }
            net.set_params(&theta).unwrap();
        }
    }

    #[test]
    fn standardization_is_stored() {
        let mut net = Mlp::new(2, &[3], 2, 0).unwrap();
        net.standardize_on(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(net.input_mean, vec![2.0, 5.0]);
        assert_abs_diff_eq!(net.input_scale[0], 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(net.input_scale[1], 1.0);
    }

    #[test]
    fn json_round_trip() {
        let net = Mlp::new(2, &[3, 3, 3], 2, 9).unwrap();
        let back: Mlp = serde_json::from_str(&serde_json::to_string(&net).unwrap()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn deterministic_initialization() {
        assert_eq!(Mlp::new(4, &[3, 3, 3], 2, 2).unwrap(), Mlp::new(4, &[3, 3, 3], 2, 2).unwrap());
        assert_ne!(Mlp::new(4, &[3, 3, 3], 2, 2).unwrap(), Mlp::new(4, &[3, 3, 3], 2, 3).unwrap());
    }
}
