//! Analytic false-alarm and detection probabilities of the energy detectors.
//!
//! Given the channels, the energy statistic is (approximately, for
//! non-constant-modulus alphabets) non-central chi-square with `2N` degrees
//! of freedom and non-centrality `c * g`, where `c = 2N Ex / sn` and `g` is
//! the total received channel power. A tail probability at threshold `t` is
//! then `Q_N(sqrt(c g), sqrt(t))`, averaged over the exponential channel
//! powers.
//!
//! The analytic MPT detection rate is not available; it is evaluated by
//! simulation only.

use crate::detectors::{validate_param, DetectorVariant};
use crate::scenario::SensingScenario;
use crate::specfun::{
    central_chi2_sf, inv_marcum_q_threshold, ln_poisson_at_or_above, marcum_q, poisson_split,
    try_rayleigh_expectation, Integral, QuadratureRule, Tolerance,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticResult {
    pub value: f64,
    pub method: Method,
    pub est_abs_error: f64,
}

impl AnalyticResult {
    fn closed(value: f64) -> Self {
        Self {
            value: value.clamp(0.0, 1.0),
            method: Method::ClosedForm,
            est_abs_error: 0.0,
        }
    }

    fn quadrature(integral: Integral, tol: &Tolerance) -> Self {
        Self {
            value: integral.value.clamp(0.0, 1.0),
            method: Method::Quadrature,
            est_abs_error: integral.abs_error + tol.abs_tol,
        }
    }
}

/// Quadrature rule and series tolerance used by the integral forms.
///
/// The series tolerance must sit well below the quadrature tolerance: the
/// truncation error of `Q_N` jumps as the cut-off moves with the channel
/// power, and an adaptive rule would otherwise keep refining that noise.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    pub rule: QuadratureRule,
    pub tolerance: Tolerance,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            rule: QuadratureRule::adaptive(1e-10),
            tolerance: Tolerance {
                abs_tol: 1e-15,
                ..Tolerance::default()
            },
        }
    }
}

fn check_threshold(name: &'static str, t: f64) -> Result<()> {
    if !(t >= 0.0) {
        return Err(Error::validation(name, format!("threshold must be >= 0, got {t}")));
    }
    Ok(())
}

/// Tail probability `Q_N(sqrt(c g), sqrt(t))` of the energy statistic.
fn tail(scenario: &SensingScenario, power: f64, threshold: f64, tol: &Tolerance) -> Result<f64> {
    let lambda = scenario.noncentrality_per_power() * power;
    marcum_q(scenario.n_samples(), lambda.sqrt(), threshold.max(0.0).sqrt(), tol)
}

/// `E[h(g1)]` with `g1` the serving channel power.
fn over_serving(
    scenario: &SensingScenario,
    opts: &AnalysisOptions,
    h: impl FnMut(f64) -> Result<f64>,
) -> Result<AnalyticResult> {
    let integral = try_rayleigh_expectation(h, scenario.sigma1_sq(), &opts.rule)?;
    Ok(AnalyticResult::quadrature(integral, &opts.tolerance))
}

/// `E[h(g1, g2)]` over both channel powers, as nested integrals with the
/// serving power outermost.
fn over_both(
    scenario: &SensingScenario,
    opts: &AnalysisOptions,
    mut h: impl FnMut(f64, f64) -> Result<f64>,
) -> Result<AnalyticResult> {
    let mut inner_error = 0.0f64;
    let outer = try_rayleigh_expectation(
        |g1| {
            let inner = try_rayleigh_expectation(|g2| h(g1, g2), scenario.sigma2_sq(), &opts.rule)?;
            inner_error = inner_error.max(inner.abs_error);
            Ok::<_, Error>(inner.value)
        },
        scenario.sigma1_sq(),
        &opts.rule,
    )?;
    Ok(AnalyticResult::quadrature(
        Integral {
            value: outer.value,
            abs_error: outer.abs_error + inner_error,
        },
        &opts.tolerance,
    ))
}

/// ED1 false-alarm rate in closed form.
///
/// With `p^2 = sn / (N Ex s1)`, `q = p^2 + 1`, `v = t1/2`, `w = v/q`:
///
/// `Pf = e^{-v} sum_{n<N-1} v^n/n! + q^{N-1} e^{-v} (e^w - sum_{n<N-1} w^n/n!)`
///
/// The second term is `q^{N-1} e^{w-v} P(Pois(w) >= N-1)` and is formed in
/// the log domain; `q^{N-1} e^w` alone overflows for realistic `N`.
pub fn pf_ed1_closed(t1: f64, scenario: &SensingScenario) -> Result<AnalyticResult> {
    check_threshold("t1", t1)?;
    let n = scenario.n_samples() as u64;
    let p_sq = scenario.sigma_n_sq() / (n as f64 * scenario.symbol_energy() * scenario.sigma1_sq());
    let q = p_sq + 1.0;
    let v = 0.5 * t1;
    let w = v / q;
    let head = poisson_split(n - 1, v).below;
    let ln_bracket = (n - 1) as f64 * q.ln() - v + w + ln_poisson_at_or_above(n - 1, w);
    Ok(AnalyticResult::closed(head + ln_bracket.exp()))
}

/// ED1 false-alarm rate by averaging `Q_N` over the serving channel power.
pub fn pf_ed1_quadrature(t1: f64, scenario: &SensingScenario, opts: &AnalysisOptions) -> Result<AnalyticResult> {
    check_threshold("t1", t1)?;
    over_serving(scenario, opts, |g1| tail(scenario, g1, t1, &opts.tolerance))
}

/// ED1 detection rate, averaged over both channel powers.
pub fn pd_ed1(t1: f64, scenario: &SensingScenario, opts: &AnalysisOptions) -> Result<AnalyticResult> {
    check_threshold("t1", t1)?;
    over_both(scenario, opts, |g1, g2| tail(scenario, g1 + g2, t1, &opts.tolerance))
}

/// ED2 (exact) detection rate. The threshold is solved once per serving
/// power node and reused across the inner integral; the false-alarm rate is
/// `delta` by construction.
pub fn pd_ed2_exact(delta: f64, scenario: &SensingScenario, opts: &AnalysisOptions) -> Result<AnalyticResult> {
    validate_param(DetectorVariant::Ed2Exact, delta)?;
    let n = scenario.n_samples();
    let c = scenario.noncentrality_per_power();
    let tol = &opts.tolerance;
    let mut cached: Option<(f64, f64)> = None;
    over_both(scenario, opts, |g1, g2| {
        let t = match cached {
            Some((node, t)) if node == g1 => t,
            _ => {
                let t = inv_marcum_q_threshold(n, c * g1, delta, tol)?;
                cached = Some((g1, t));
                t
            }
        };
        tail(scenario, g1 + g2, t, tol)
    })
}

/// Per-block ED2 (linear) threshold `t2 + c g1 + 2N`, clamped at zero.
fn linear_threshold(scenario: &SensingScenario, g1: f64, t2: f64) -> f64 {
    (t2 + scenario.noncentrality_per_power() * g1 + 2.0 * scenario.n_samples() as f64).max(0.0)
}

fn check_t2(t2: f64) -> Result<()> {
    if t2.is_nan() {
        return Err(Error::validation("t2", "must not be NaN"));
    }
    Ok(())
}

/// ED2 (linear) false-alarm rate.
pub fn pf_ed2_linear(t2: f64, scenario: &SensingScenario, opts: &AnalysisOptions) -> Result<AnalyticResult> {
    check_t2(t2)?;
    over_serving(scenario, opts, |g1| {
        tail(scenario, g1, linear_threshold(scenario, g1, t2), &opts.tolerance)
    })
}

/// ED2 (linear) detection rate.
pub fn pd_ed2_linear(t2: f64, scenario: &SensingScenario, opts: &AnalysisOptions) -> Result<AnalyticResult> {
    check_t2(t2)?;
    over_both(scenario, opts, |g1, g2| {
        tail(scenario, g1 + g2, linear_threshold(scenario, g1, t2), &opts.tolerance)
    })
}

/// Type-1 ED false-alarm rate, `P(chi2_{2N} > t(delta))`.
pub fn pf_type1_ed(delta: f64, scenario: &SensingScenario, opts: &AnalysisOptions) -> Result<AnalyticResult> {
    validate_param(DetectorVariant::Type1Ed, delta)?;
    let t = inv_marcum_q_threshold(scenario.n_samples(), 0.0, delta, &opts.tolerance)?;
    Ok(AnalyticResult::closed(central_chi2_sf(scenario.n_samples(), t)))
}

/// Type-1 ED detection rate on a vacant resource, averaged over the
/// interferer power.
pub fn pd_type1_ed(delta: f64, scenario: &SensingScenario, opts: &AnalysisOptions) -> Result<AnalyticResult> {
    validate_param(DetectorVariant::Type1Ed, delta)?;
    let t = inv_marcum_q_threshold(scenario.n_samples(), 0.0, delta, &opts.tolerance)?;
    let integral = try_rayleigh_expectation(
        |g2| tail(scenario, g2, t, &opts.tolerance),
        scenario.sigma2_sq(),
        &opts.rule,
    )?;
    Ok(AnalyticResult::quadrature(integral, &opts.tolerance))
}

/// Analytic `(Pf, Pd)` of a detector at its threshold parameter, or `None`
/// for the MPT.
pub fn analytic_rates(
    variant: DetectorVariant,
    param: f64,
    scenario: &SensingScenario,
    opts: &AnalysisOptions,
) -> Result<Option<(AnalyticResult, AnalyticResult)>> {
    Ok(Some(match variant {
        DetectorVariant::Ed1 => (pf_ed1_closed(param, scenario)?, pd_ed1(param, scenario, opts)?),
        DetectorVariant::Ed2Exact => (
            AnalyticResult::closed(param),
            pd_ed2_exact(param, scenario, opts)?,
        ),
        DetectorVariant::Ed2Linear => (
            pf_ed2_linear(param, scenario, opts)?,
            pd_ed2_linear(param, scenario, opts)?,
        ),
        DetectorVariant::Type1Ed => (
            pf_type1_ed(param, scenario, opts)?,
            pd_type1_ed(param, scenario, opts)?,
        ),
        DetectorVariant::Mpt => return Ok(None),
    }))
}

/// Absolute accuracy of the calibrated false-alarm rate.
const CALIBRATION_PF_TOL: f64 = 1e-9;

/// Threshold parameter whose analytic false-alarm rate equals `target_pf`.
///
/// ED2 (exact) and the Type-1 ED are parameterized by the false-alarm rate
/// itself, so the target passes through. For ED1 and ED2 (linear), the
/// achievable range is checked at the ends of a bracket first, then the
/// monotone analytic `Pf` is bisected.
pub fn calibrate_threshold(
    variant: DetectorVariant,
    target_pf: f64,
    scenario: &SensingScenario,
    opts: &AnalysisOptions,
) -> Result<f64> {
    if !(target_pf > 0.0 && target_pf < 1.0) {
        return Err(Error::validation("target_pf", format!("must lie in (0, 1), got {target_pf}")));
    }
    let two_n = 2.0 * scenario.n_samples() as f64;
    match variant {
        DetectorVariant::Ed2Exact | DetectorVariant::Type1Ed => Ok(target_pf),
        DetectorVariant::Mpt => Err(Error::Argument(
            "the MPT has no analytic false-alarm rate; calibrate it empirically".into(),
        )),
        DetectorVariant::Ed1 => {
            let pf = |t: f64| pf_ed1_closed(t, scenario).map(|r| r.value);
            // The statistic has mean 2N + c s1 under the null.
            let cap = 64.0 * (two_n + scenario.noncentrality_per_power() * scenario.sigma1_sq());
            bisect_decreasing(pf, 0.0, cap, target_pf)
        }
        DetectorVariant::Ed2Linear => {
            let pf = |t: f64| pf_ed2_linear(t, scenario, opts).map(|r| r.value);
            // Far below -2N the threshold clamps to zero for all but the
            // strongest serving channels; far above, Pf vanishes.
            let span = 64.0 * (two_n + scenario.noncentrality_per_power() * scenario.sigma1_sq());
            let lo = -span;
            let hi = span;
            bisect_decreasing(pf, lo, hi, target_pf)
        }
    }
}

fn bisect_decreasing(mut f: impl FnMut(f64) -> Result<f64>, mut lo: f64, mut hi: f64, target: f64) -> Result<f64> {
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if target > f_lo || target < f_hi {
        return Err(Error::Calibration {
            target,
            min: f_hi,
            max: f_lo,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if (v - target).abs() <= CALIBRATION_PF_TOL {
            return Ok(mid);
        }
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
