//! Integration against an exponential weight.
//!
//! Channel powers under Rayleigh fading are exponentially distributed, so
//! every analytic average in this crate has the form
//! `int_0^inf f(g) (1/s) exp(-g/s) dg = int_0^inf f(s x) exp(-x) dx`.
//! Two rules are provided: classical Gauss-Laguerre, and an adaptive
//! Gauss-Kronrod scheme on a truncated range. The detection integrands are
//! steep sigmoids in the channel power, which a fixed Laguerre rule resolves
//! poorly, so the adaptive rule is the default.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureKind {
    GaussLaguerre,
    AdaptiveTruncated,
}

/// Nodes and weights of the `n`-point Gauss-Laguerre rule for weight `e^{-x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLaguerre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLaguerre {
    /// Builds the rule by Newton iteration on the three-term Laguerre
    /// recurrence. The recurrence is rescaled on the fly, so large `n` does
    /// not overflow.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("nodes", "Gauss-Laguerre needs at least one node"));
        }
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let mut z = 0.0f64;
        for i in 0..n {
            z = match i {
                0 => 3.0 / (1.0 + 2.4 * nf),
                1 => z + 15.0 / (1.0 + 2.5 * nf),
                _ => {
                    let ai = (i - 1) as f64;
                    z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - nodes[i - 2])
                }
            };
            // Rounding leaves a relative jitter near 1e-13 in the Newton step.
            let mut converged = false;
            for _ in 0..100 {
                let (l_n, l_prev, _) = laguerre_pair(n, z);
                let step = l_n * z / (nf * (l_n - l_prev));
                z -= step;
                if step.abs() <= 1e-12 * z.abs() {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Numerical {
                    op: "gauss_laguerre",
                    message: format!("node {i} of {n} did not converge"),
                });
            }
            let (l_n, l_prev, log_scale) = laguerre_pair(n, z);
            let pp = nf * (l_n - l_prev) / z;
            nodes[i] = z;
            // w = -1 / (n L_n'(x) L_{n-1}(x)), both factors carry exp(log_scale).
            weights[i] = -(-2.0 * log_scale).exp() / (pp * nf * l_prev);
        }
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `int_0^inf f(x) e^{-x} dx`.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Returns `(L_n(z), L_{n-1}(z), log_scale)` where the true values are the
/// returned ones times `exp(log_scale)`.
fn laguerre_pair(n: usize, z: f64) -> (f64, f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    let mut log_scale = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = ((2.0 * jf - 1.0 - z) * p2 - (jf - 1.0) * p3) / jf;
        if p1.abs() > 1e150 {
            p1 *= 1e-150;
            p2 *= 1e-150;
            log_scale += 150.0 * std::f64::consts::LN_10;
        }
    }
    (p1, p2, log_scale)
}

/// Adaptive 15-point Gauss-Kronrod integration of `f(x) e^{-x}` over
/// `[0, upper]`. The neglected tail is at most `sup|f| * e^{-upper}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveTruncated {
    pub abs_tol: f64,
    pub upper: f64,
    pub max_intervals: usize,
}

impl Default for AdaptiveTruncated {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            upper: 50.0,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuadratureRule {
    GaussLaguerre(GaussLaguerre),
    AdaptiveTruncated(AdaptiveTruncated),
}

impl QuadratureRule {
    pub fn gauss_laguerre(n: usize) -> Result<Self> {
        GaussLaguerre::new(n).map(Self::GaussLaguerre)
    }

    pub fn adaptive(abs_tol: f64) -> Self {
        Self::AdaptiveTruncated(AdaptiveTruncated {
            abs_tol,
            ..AdaptiveTruncated::default()
        })
    }

    pub fn kind(&self) -> QuadratureKind {
        match self {
            Self::GaussLaguerre(_) => QuadratureKind::GaussLaguerre,
            Self::AdaptiveTruncated(_) => QuadratureKind::AdaptiveTruncated,
        }
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::AdaptiveTruncated(AdaptiveTruncated::default())
    }
}

/// A quadrature value with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
}

/// `E[f(g)]` for `g` exponential with mean `scale`.
pub fn rayleigh_expectation(f: impl Fn(f64) -> f64, scale: f64, rule: &QuadratureRule) -> f64 {
    try_rayleigh_expectation(|g| Ok::<_, Error>(f(g)), scale, rule)
        .map(|i| i.value)
        .unwrap_or(f64::NAN)
}

/// Fallible form of [`rayleigh_expectation`] that also reports the error
/// estimate. The first integrand error aborts the integration.
pub fn try_rayleigh_expectation<E>(
    mut f: impl FnMut(f64) -> std::result::Result<f64, E>,
    scale: f64,
    rule: &QuadratureRule,
) -> std::result::Result<Integral, E> {
    match rule {
        QuadratureRule::GaussLaguerre(gl) => {
            let mut value = 0.0;
            for (&x, &w) in gl.nodes.iter().zip(&gl.weights) {
                value += w * f(scale * x)?;
            }
            Ok(Integral { value, abs_error: 0.0 })
        }
        QuadratureRule::AdaptiveTruncated(cfg) => {
            let tail = (-cfg.upper).exp();
            let mut g = |x: f64| f(scale * x).map(|v| v * (-x).exp());
            let mut integral = adaptive_gk15(&mut g, 0.0, cfg.upper, cfg)?;
            integral.abs_error += tail;
            Ok(integral)
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<E>(
    f: &mut impl FnMut(f64) -> std::result::Result<f64, E>,
    lo: f64,
    hi: f64,
) -> std::result::Result<Segment, E> {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let dx = half * XGK[k];
        let s = f(center - dx)? + f(center + dx)?;
        kronrod += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    Ok(Segment {
        lo,
        hi,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    })
}

/// Globally adaptive bisection: always split the segment with the largest
/// error estimate until the summed estimate meets the tolerance.
fn adaptive_gk15<E>(
    f: &mut impl FnMut(f64) -> std::result::Result<f64, E>,
    lo: f64,
    hi: f64,
    cfg: &AdaptiveTruncated,
) -> std::result::Result<Integral, E> {
    // Geometric initial panels put resolution near the origin, where the
    // exponential weight carries most of its mass.
    let mut edges = vec![lo];
    let mut x = 0.25;
    while x < hi {
        edges.push(lo + x);
        x *= 2.0;
    }
    edges.push(hi);

    let mut heap = BinaryHeap::new();
    let mut total_error = 0.0;
    for w in edges.windows(2) {
        let seg = gk15(f, w[0], w[1])?;
        total_error += seg.error;
        heap.push(seg);
    }
    let mut stuck = Vec::new();
    while total_error > cfg.abs_tol && heap.len() + stuck.len() < cfg.max_intervals {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // No longer splittable in floating point.
            total_error -= worst.error;
            stuck.push(worst);
            continue;
        }
        let left = gk15(f, worst.lo, mid)?;
        let right = gk15(f, mid, worst.hi)?;
        total_error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    let value = heap.iter().chain(&stuck).map(|s| s.value).sum();
    let abs_error = heap.iter().chain(&stuck).map(|s| s.error).sum();
    Ok(Integral { value, abs_error })
}
