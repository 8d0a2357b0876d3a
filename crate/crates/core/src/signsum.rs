//! Weighted sums of signs of linear indices, `Σ_k w_k sgn(c_k'b)`.
//!
//! Every maximum-score and rank-correlation criterion in the crate reduces
//! to this form once kernel weights and outcome differences are computed.
//! Terms are built once per sample; evaluation at a candidate coefficient
//! vector is then a single pass, or a binary search when the coefficient
//! vector has one free entry.

use crate::error::{Error, Result};
use crate::optimizer::{DeConfig, de_maximize};
use crate::par;

#[inline]
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// A list of weighted sign terms over full coefficient vectors of length
/// `dim`. Each term may also carry the index of the agent (or row) it came
/// from, so that resampling weights can be applied without rebuilding.
#[derive(Clone, Debug, Default)]
pub struct SignSum {
    dim: usize,
    coefs: Vec<f64>,
    weights: Vec<f64>,
    owners: Vec<u32>,
}

impl SignSum {
    pub fn new(dim: usize) -> Self {
        SignSum { dim, ..Default::default() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Adds a term unless its weight is exactly zero.
    #[inline]
    pub fn push(&mut self, coef: &[f64], weight: f64, owner: usize) {
        debug_assert_eq!(coef.len(), self.dim);
        if weight != 0.0 {
            self.coefs.extend_from_slice(coef);
            self.weights.push(weight);
            self.owners.push(owner as u32);
        }
    }

    /// Concatenates term lists built in parallel, in order.
    pub fn concat(dim: usize, parts: Vec<SignSum>) -> SignSum {
        let mut out = SignSum::new(dim);
        let total: usize = parts.iter().map(|p| p.len()).sum();
        out.coefs.reserve(total * dim);
        out.weights.reserve(total);
        out.owners.reserve(total);
        for p in parts {
            out.coefs.extend(p.coefs);
            out.weights.extend(p.weights);
            out.owners.extend(p.owners);
        }
        out
    }

    #[inline]
    fn term_sign(&self, k: usize, b: &[f64]) -> f64 {
        let c = &self.coefs[k * self.dim..(k + 1) * self.dim];
        sgn(c.iter().zip(b).map(|(x, y)| x * y).sum())
    }

    /// `Σ_k w_k sgn(c_k'b)` for a full coefficient vector `b`.
    pub fn value(&self, b: &[f64]) -> f64 {
        assert_eq!(b.len(), self.dim);
        par::sum_chunked(self.len(), |r| r.map(|k| self.weights[k] * self.term_sign(k, b)).sum())
    }

    /// As [`SignSum::value`] with each term's weight multiplied by the
    /// weight of its owner.
    pub fn value_reweighted(&self, b: &[f64], owner_weight: &[f64]) -> f64 {
        assert_eq!(b.len(), self.dim);
        par::sum_chunked(self.len(), |r| {
            r.map(|k| owner_weight[self.owners[k] as usize] * self.weights[k] * self.term_sign(k, b)).sum()
        })
    }

    /// Builds a fast evaluator for `b = (1, t)` as a function of the scalar
    /// `t`. Only valid when `dim == 2`.
    pub fn scalar_profile(&self, owner_weight: Option<&[f64]>) -> ScalarProfile {
        assert_eq!(self.dim, 2, "scalar profile needs one free coefficient");
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut constant = 0.0;
        for k in 0..self.len() {
            let w = match owner_weight {
                Some(ow) => ow[self.owners[k] as usize] * self.weights[k],
                None => self.weights[k],
            };
            if w == 0.0 {
                continue;
            }
            let (c0, c1) = (self.coefs[2 * k], self.coefs[2 * k + 1]);
            if c1 > 0.0 {
                pos.push((-c0 / c1, w));
            } else if c1 < 0.0 {
                neg.push((-c0 / c1, w));
            } else {
                constant += w * sgn(c0);
            }
        }
        ScalarProfile { pos: Breaks::new(pos), neg: Breaks::new(neg), constant }
    }
}

#[derive(Clone, Debug)]
struct Breaks {
    at: Vec<f64>,
    prefix: Vec<f64>,
}

impl Breaks {
    fn new(mut v: Vec<(f64, f64)>) -> Self {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut prefix = Vec::with_capacity(v.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &(_, w) in &v {
            acc += w;
            prefix.push(acc);
        }
        Breaks { at: v.into_iter().map(|p| p.0).collect(), prefix }
    }

    /// (weight of breaks strictly below t, weight strictly above t)
    #[inline]
    fn split(&self, t: f64) -> (f64, f64) {
        let lo = self.at.partition_point(|&a| a < t);
        let hi = self.at.partition_point(|&a| a <= t);
        let total = self.prefix[self.at.len()];
        (self.prefix[lo], total - self.prefix[hi])
    }
}

/// Piecewise-constant function `t ↦ Σ_k w_k sgn(c_k0 + c_k1 t)` stored as
/// sorted breakpoints with prefix sums. Agrees with the direct sum except
/// for rounding when `t` lies within a few ulps of a breakpoint.
#[derive(Clone, Debug)]
pub struct ScalarProfile {
    pos: Breaks,
    neg: Breaks,
    constant: f64,
}

impl ScalarProfile {
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        let (pb, pa) = self.pos.split(t);
        let (nb, na) = self.neg.split(t);
        // Increasing terms are positive above their break; decreasing ones below.
        self.constant + (pb - pa) + (na - nb)
    }

    /// Exhaustive maximization over `[lo, hi]`: the profile is constant
    /// between breakpoints, so checking one point per cell is exact. Returns
    /// the best cell `(left, right, value)`; the leftmost wins ties.
    pub fn best_cell(&self, lo: f64, hi: f64) -> (f64, f64, f64) {
        let mut cuts: Vec<f64> = self.pos.at.iter().chain(&self.neg.at).copied().filter(|&a| a > lo && a < hi).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut edges = Vec::with_capacity(cuts.len() + 2);
        edges.push(lo);
        edges.extend(cuts);
        edges.push(hi);
        let mut best = (lo, hi, f64::NEG_INFINITY);
        for w in edges.windows(2) {
            let v = self.value(0.5 * (w[0] + w[1]));
            if v > best.2 {
                best = (w[0], w[1], v);
            }
        }
        best
    }
}

/// Maximizes `b_free ↦ Σ_k ω_{owner(k)} w_k sgn(c_k'(1, b_free))` by DE and
/// returns the free coefficients with the (direct) criterion value there.
pub fn maximize(sum: &SignSum, owner_weight: Option<&[f64]>, de: &DeConfig) -> Result<(Vec<f64>, f64)> {
    if de.bounds.len() + 1 != sum.dim() {
        return Err(Error::dimension("search box", sum.dim() - 1, de.bounds.len()));
    }
    let full = |x: &[f64]| -> Vec<f64> { std::iter::once(1.0).chain(x.iter().copied()).collect() };
    let direct = |x: &[f64]| match owner_weight {
        Some(ow) => sum.value_reweighted(&full(x), ow),
        None => sum.value(&full(x)),
    };
    let r = if sum.dim() == 2 {
        let prof = sum.scalar_profile(owner_weight);
        de_maximize(|x| prof.value(x[0]), de)?
    } else {
        de_maximize(direct, de)?
    };
    let v = direct(&r.argmin);
    Ok((r.argmin, v))
}
