//! Gaussian-based kernels of order 2, 4 and 6, product kernels for matching
//! on covariate differences, and the bandwidth rules used by the estimators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Order of a symmetric Gaussian-based kernel. All moments below the order
/// vanish and the moment of the order itself does not.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct KernelSpec {
    order: u32,
}

impl KernelSpec {
    pub const SECOND: KernelSpec = KernelSpec { order: 2 };
    pub const FOURTH: KernelSpec = KernelSpec { order: 4 };
    pub const SIXTH: KernelSpec = KernelSpec { order: 6 };

    pub fn new(order: u32) -> Result<Self> {
        match order {
            2 | 4 | 6 => Ok(KernelSpec { order }),
            _ => Err(Error::config(format!(
                "kernel order {order} unsupported; use 2, 4 or 6"
            ))),
        }
    }

    pub fn order(self) -> u32 {
        self.order
    }

    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        let u2 = u * u;
        let phi = INV_SQRT_2PI * (-0.5 * u2).exp();
        match self.order {
            2 => phi,
            4 => 0.5 * (3.0 - u2) * phi,
            _ => 0.125 * (15.0 - 10.0 * u2 + u2 * u2) * phi,
        }
    }

    /// Scaled kernel `K(u / h) / h`.
    #[inline]
    pub fn scaled(self, diff: f64, h: f64) -> f64 {
        self.eval(diff / h) / h
    }
}

impl TryFrom<u32> for KernelSpec {
    type Error = Error;
    fn try_from(order: u32) -> Result<Self> {
        KernelSpec::new(order)
    }
}

impl From<KernelSpec> for u32 {
    fn from(k: KernelSpec) -> u32 {
        k.order
    }
}

/// Evaluates the kernel of the given order at `u`.
pub fn gaussian_kernel(u: f64, spec: KernelSpec) -> f64 {
    spec.eval(u)
}

/// `∫ u^power K(u) du` over `[-half_width, half_width]` by adaptive Simpson.
pub fn kernel_moment(spec: KernelSpec, power: u32, half_width: f64) -> f64 {
    let f = |u: f64| u.powi(power as i32) * spec.eval(u);
    // Split at zero and integrate each half so odd moments are not
    // cancelled away by a lucky symmetric first panel.
    adaptive_simpson(&f, -half_width, 0.0, 1e-14) + adaptive_simpson(&f, 0.0, half_width, 1e-14)
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let c = 0.5 * (a + b);
    let (fa, fb, fc) = (f(a), f(b), f(c));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_step(f, a, b, fa, fb, fc, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fc: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let c = 0.5 * (a + b);
    let (d, e) = (0.5 * (a + c), 0.5 * (c + b));
    let (fd, fe) = (f(d), f(e));
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let delta = left + right - whole;
    // Minimum depth guards against early acceptance on the flat Gaussian tails.
    if depth == 0 || (depth < 44 && delta.abs() <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, c, fa, fc, fd, left, 0.5 * tol, depth - 1)
        + simpson_step(f, c, b, fc, fb, fe, right, 0.5 * tol, depth - 1)
}

/// Product kernel weight for a vector of covariate differences.
///
/// Continuous coordinates contribute `K(diff / h) / h` with their own
/// bandwidth; discrete coordinates contribute the exact-match indicator.
pub fn product_weight(
    diffs: &[f64],
    bandwidths: &[f64],
    spec: KernelSpec,
    discrete_mask: &[bool],
) -> Result<f64> {
    if bandwidths.len() != diffs.len() {
        return Err(Error::dimension("bandwidths", diffs.len(), bandwidths.len()));
    }
    if discrete_mask.len() != diffs.len() {
        return Err(Error::dimension("discrete mask", diffs.len(), discrete_mask.len()));
    }
    if let Some(h) = bandwidths.iter().zip(discrete_mask).find(|(h, d)| !**d && **h <= 0.0) {
        return Err(Error::config(format!("non-positive bandwidth {}", h.0)));
    }
    Ok(product_weight_unchecked(diffs, bandwidths, spec, discrete_mask))
}

/// [`product_weight`] without argument validation, for inner loops.
#[inline]
pub fn product_weight_unchecked(
    diffs: &[f64],
    bandwidths: &[f64],
    spec: KernelSpec,
    discrete_mask: &[bool],
) -> f64 {
    let mut w = 1.0;
    for ((&d, &h), &disc) in diffs.iter().zip(bandwidths).zip(discrete_mask) {
        if disc {
            if d != 0.0 {
                return 0.0;
            }
        } else {
            w *= spec.scaled(d, h);
        }
    }
    w
}

/// Aitchison-Aitken weight for an unordered discrete variable with
/// `categories` levels and smoothing parameter `lambda`.
#[inline]
pub fn aitchison_aitken(equal: bool, lambda: f64, categories: usize) -> f64 {
    if equal {
        1.0 - lambda
    } else if categories > 1 {
        lambda / (categories - 1) as f64
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthRule {
    /// `c σ̂ N^{-1/8} ln(N)^{1/6}`, first-step rank-correlation matching.
    MrcStep1,
    /// `c σ̂ N^{-1/4} ln(N)^{1/4}`, second-step index matching.
    MrcStep2,
    /// `c σ̂ N^{-1/7} ln(N)^{-1/14}`, panel maximum score.
    PanelMs,
    /// Normal-reference rule of thumb `c σ̂ N^{-1/(2·order + dims)}` for a
    /// regression on `dims` continuous regressors with a kernel of the given
    /// order. Silverman's `N^{-1/5}` is the case `order = 2, dims = 1`.
    NormalReference { order: u32, dims: u32 },
}

pub fn bandwidth(rule: BandwidthRule, n: usize, c: f64, sigma_hat: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::config(format!("bandwidth needs N >= 2, got {n}")));
    }
    if !(c > 0.0) || !(sigma_hat > 0.0) {
        return Err(Error::config(format!(
            "bandwidth constant and scale must be positive (c = {c}, sigma = {sigma_hat})"
        )));
    }
    let nf = n as f64;
    let ln = nf.ln();
    let rate = match rule {
        BandwidthRule::MrcStep1 => nf.powf(-1.0 / 8.0) * ln.powf(1.0 / 6.0),
        BandwidthRule::MrcStep2 => nf.powf(-0.25) * ln.powf(0.25),
        BandwidthRule::PanelMs => nf.powf(-1.0 / 7.0) * ln.powf(-1.0 / 14.0),
        BandwidthRule::NormalReference { order, dims } => nf.powf(-1.0 / (2 * order + dims.max(1)) as f64),
    };
    Ok(c * sigma_hat * rate)
}

/// Per-column bandwidths for a block of matching variables. Discrete columns
/// get a placeholder of 1.0 (they are matched exactly). Columns with zero
/// spread fall back to a unit scale so the bandwidth stays positive.
pub fn column_bandwidths(
    rule: BandwidthRule,
    n: usize,
    c: f64,
    scales: &[f64],
    discrete: &[bool],
) -> Result<Vec<f64>> {
    scales
        .iter()
        .zip(discrete)
        .map(|(&s, &d)| {
            if d {
                Ok(1.0)
            } else {
                bandwidth(rule, n, c, if s > 0.0 { s } else { 1.0 })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kernel_values() {
        assert_abs_diff_eq!(gaussian_kernel(0.0, KernelSpec::SECOND), 0.398_942_280_4, epsilon = 1e-10);
        assert_abs_diff_eq!(gaussian_kernel(0.0, KernelSpec::FOURTH), 0.598_413_420_6, epsilon = 1e-10);
        // (15 - 10 + 1) / 8 = 0.75 times phi(1).
        assert_abs_diff_eq!(gaussian_kernel(1.0, KernelSpec::SIXTH), 0.75 * INV_SQRT_2PI * (-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(gaussian_kernel(1.0, KernelSpec::SIXTH), 0.181_478_043_4, epsilon = 1e-10);
    }

    #[test]
    fn unsupported_order() {
        assert!(KernelSpec::new(3).is_err());
        assert!(KernelSpec::new(8).is_err());
        assert!(KernelSpec::new(0).is_err());
    }

    #[test]
    fn moments_vanish_below_order() {
        for spec in [KernelSpec::SECOND, KernelSpec::FOURTH, KernelSpec::SIXTH] {
            let k = spec.order();
            assert_abs_diff_eq!(kernel_moment(spec, 0, 10.0), 1.0, epsilon = 1e-8);
            for p in 1..k {
                assert_abs_diff_eq!(kernel_moment(spec, p, 10.0), 0.0, epsilon = 1e-8);
            }
            assert!(kernel_moment(spec, k, 10.0).abs() > 1e-3);
        }
    }

    #[test]
    fn product_weight_examples() {
        let w = product_weight(&[0.0, 0.0], &[1.0, 1.0], KernelSpec::SECOND, &[false, false]).unwrap();
        assert_abs_diff_eq!(w, 0.159_154_9, epsilon = 1e-7);
        let w = product_weight(&[0.5], &[1.0], KernelSpec::SECOND, &[true]).unwrap();
        assert_eq!(w, 0.0);
        let w = product_weight(&[0.0, 0.3], &[0.5, 0.5], KernelSpec::FOURTH, &[false, false]).unwrap();
        let k = KernelSpec::FOURTH;
        assert_abs_diff_eq!(w, 2.0 * k.eval(0.0) * 2.0 * k.eval(0.6), epsilon = 1e-14);
        assert!(product_weight(&[0.0], &[0.0], KernelSpec::SECOND, &[false]).is_err());
        assert!(product_weight(&[0.0, 1.0], &[1.0], KernelSpec::SECOND, &[false]).is_err());
    }

    #[test]
    fn bandwidth_examples() {
        let h = bandwidth(BandwidthRule::MrcStep1, 1000, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(h, 1000f64.powf(-0.125) * 1000f64.ln().powf(1.0 / 6.0), epsilon = 1e-15);
        assert_abs_diff_eq!(h, 0.582, epsilon = 5e-4);
        let s = bandwidth(BandwidthRule::MrcStep2, 1000, 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(s, 0.577, epsilon = 5e-4);
        let p = bandwidth(BandwidthRule::PanelMs, 1000, 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(p, 0.6494, epsilon = 5e-4);
        let s = bandwidth(BandwidthRule::NormalReference { order: 2, dims: 1 }, 1000, 1.06, 1.0).unwrap();
        assert_abs_diff_eq!(s, 1.06 * 1000f64.powf(-0.2), epsilon = 1e-15);
        assert!(bandwidth(BandwidthRule::MrcStep1, 1, 1.0, 1.0).is_err());
        assert!(bandwidth(BandwidthRule::MrcStep1, 10, -1.0, 1.0).is_err());
    }

    #[test]
    fn bandwidth_decreasing_in_n() {
        for rule in [BandwidthRule::MrcStep1, BandwidthRule::MrcStep2, BandwidthRule::PanelMs] {
            let mut prev = f64::INFINITY;
            let mut n = 10usize;
            while n <= 1_000_000 {
                let h = bandwidth(rule, n, 1.0, 1.0).unwrap();
                assert!(h < prev, "{rule:?} not decreasing at N = {n}");
                prev = h;
                n = n * 3 / 2;
            }
        }
    }

    #[test]
    fn aitchison_aitken_weights() {
        assert_eq!(aitchison_aitken(true, 0.1, 2), 0.9);
        assert!((aitchison_aitken(false, 0.1, 3) - 0.05).abs() < 1e-15);
    }
}
