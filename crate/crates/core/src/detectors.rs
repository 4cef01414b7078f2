//! Decision rules.
//!
//! All energy detectors share the statistic `e = (2/sn) sum |y_i|^2` and
//! differ only in the threshold:
//!
//! - ED1: a fixed threshold `t1`, no channel knowledge.
//! - ED2 (exact): per-block threshold solving `Q_N(sqrt(lambda1), sqrt(t)) = delta`
//!   with `lambda1 = 2N |h1_est|^2 Ex / sn`, so every channel state sees the
//!   same false-alarm rate.
//! - ED2 (linear): `t2 + E[e | H1'] = t2 + lambda1 + 2N`.
//! - Type-1 ED: the vacant-resource test against the central chi-square law.
//!
//! The most powerful test compares the Gaussian-mixture likelihoods of the
//! block under `H2` and `H1'` given the true channels, averaging over the
//! modulation formats the policy allows. It is a genie-aided benchmark.
//!
//! Every rule decides "interferer present" only when the statistic strictly
//! exceeds its threshold.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::scenario::{ModulationAlphabet, ObservationBlock, SensingScenario};
use crate::specfun::{inv_marcum_q_threshold, LogSumExp, Tolerance};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorVariant {
    Ed1,
    Ed2Exact,
    Ed2Linear,
    Mpt,
    Type1Ed,
}

impl DetectorVariant {
    pub const ALL: [DetectorVariant; 5] = [
        DetectorVariant::Ed1,
        DetectorVariant::Ed2Exact,
        DetectorVariant::Ed2Linear,
        DetectorVariant::Mpt,
        DetectorVariant::Type1Ed,
    ];

    /// Whether the threshold parameter is a target false-alarm probability
    /// rather than a threshold on the statistic.
    pub fn parameter_is_probability(self) -> bool {
        matches!(self, DetectorVariant::Ed2Exact | DetectorVariant::Type1Ed)
    }

    /// Name of the threshold parameter as printed by the CLI.
    pub fn parameter_name(self) -> &'static str {
        match self {
            DetectorVariant::Ed1 => "t1",
            DetectorVariant::Ed2Exact | DetectorVariant::Type1Ed => "delta",
            DetectorVariant::Ed2Linear => "t2",
            DetectorVariant::Mpt => "log_t",
        }
    }
}

impl fmt::Display for DetectorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectorVariant::Ed1 => "ed1",
            DetectorVariant::Ed2Exact => "ed2_exact",
            DetectorVariant::Ed2Linear => "ed2_linear",
            DetectorVariant::Mpt => "mpt",
            DetectorVariant::Type1Ed => "type1_ed",
        })
    }
}

impl FromStr for DetectorVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "ed1" => Ok(DetectorVariant::Ed1),
            "ed2_exact" => Ok(DetectorVariant::Ed2Exact),
            "ed2_linear" => Ok(DetectorVariant::Ed2Linear),
            "mpt" => Ok(DetectorVariant::Mpt),
            "type1_ed" => Ok(DetectorVariant::Type1Ed),
            other => Err(Error::validation("detector", format!("unknown detector '{other}'"))),
        }
    }
}

/// Detector variant plus its threshold parameter: `t1` for ED1, `delta` for
/// ED2 (exact) and Type-1 ED, `t2` for ED2 (linear), `log t` for the MPT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub variant: DetectorVariant,
    pub threshold_param: f64,
}

impl DetectorConfig {
    pub fn new(variant: DetectorVariant, threshold_param: f64) -> Result<Self> {
        validate_param(variant, threshold_param)?;
        Ok(Self {
            variant,
            threshold_param,
        })
    }

    /// Runs the detector on one block. ED2 variants use `fading.h1_est`;
    /// the MPT uses the true `h1`, `h2`.
    pub fn evaluate(&self, block: &ObservationBlock, scenario: &SensingScenario) -> Result<TestStatistic> {
        let p = self.threshold_param;
        let sigma_n_sq = scenario.sigma_n_sq();
        match self.variant {
            DetectorVariant::Ed1 => Ok(ed1_decide(energy_statistic(&block.samples, sigma_n_sq), p)),
            DetectorVariant::Ed2Exact => {
                let t = ed2_exact_threshold(scenario, block.fading.h1_est, p)?;
                Ok(decide(energy_statistic(&block.samples, sigma_n_sq), t))
            }
            DetectorVariant::Ed2Linear => {
                let t = ed2_linear_threshold(scenario, block.fading.h1_est, p);
                Ok(decide(energy_statistic(&block.samples, sigma_n_sq), t))
            }
            DetectorVariant::Type1Ed => {
                let t = type1_threshold(scenario, p)?;
                Ok(decide(energy_statistic(&block.samples, sigma_n_sq), t))
            }
            DetectorVariant::Mpt => {
                let alphabets = scenario.modulation_policy().alphabets();
                let d = mpt_log_densities(&block.samples, block.fading.h1, block.fading.h2, scenario, &alphabets)?;
                Ok(mpt_decide(d.h1_prime, d.h2, p))
            }
        }
    }
}

pub(crate) fn validate_param(variant: DetectorVariant, p: f64) -> Result<()> {
    if variant.parameter_is_probability() {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::validation(
                "threshold_param",
                format!("{variant} needs a false-alarm target in (0, 1), got {p}"),
            ));
        }
    } else if p.is_nan() {
        return Err(Error::validation("threshold_param", "must not be NaN"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// No interferer (`H1'`, or `H0` for the vacant-resource test).
    Low,
    /// Interferer present (`H2`, or `H1`).
    High,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestStatistic {
    pub value: f64,
    pub threshold_used: f64,
    pub decision: Decision,
}

/// `High` iff `value > threshold`; ties go to `Low`.
pub fn decide(value: f64, threshold: f64) -> TestStatistic {
    TestStatistic {
        value,
        threshold_used: threshold,
        decision: if value > threshold { Decision::High } else { Decision::Low },
    }
}

/// `(2 / sn) * sum |y_i|^2`
pub fn energy_statistic(samples: &[Complex64], sigma_n_sq: f64) -> f64 {
    2.0 / sigma_n_sq * samples.iter().map(|y| y.norm_sqr()).sum::<f64>()
}

pub fn ed1_decide(statistic: f64, t1: f64) -> TestStatistic {
    decide(statistic, t1)
}

/// `lambda1 = 2N |h1|^2 Ex / sn`
pub fn serving_noncentrality(scenario: &SensingScenario, h1: Complex64) -> f64 {
    scenario.noncentrality_per_power() * h1.norm_sqr()
}

/// Threshold holding the per-channel false-alarm rate at `delta`.
pub fn ed2_exact_threshold(scenario: &SensingScenario, h1_est: Complex64, delta: f64) -> Result<f64> {
    let lambda1 = serving_noncentrality(scenario, h1_est);
    inv_marcum_q_threshold(scenario.n_samples(), lambda1, delta, &Tolerance::default())
}

/// `t2 + lambda1 + 2N`, i.e. `t2` above the mean of the statistic under `H1'`.
pub fn ed2_linear_threshold(scenario: &SensingScenario, h1_est: Complex64, t2: f64) -> f64 {
    t2 + serving_noncentrality(scenario, h1_est) + 2.0 * scenario.n_samples() as f64
}

/// Fixed threshold for the vacant-resource test: the `1 - delta` quantile
/// of the central chi-square law with `2N` degrees of freedom.
pub fn type1_threshold(scenario: &SensingScenario, delta: f64) -> Result<f64> {
    inv_marcum_q_threshold(scenario.n_samples(), 0.0, delta, &Tolerance::default())
}

/// Log joint densities of a block under `H1'` and `H2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureLogDensities {
    pub h1_prime: f64,
    pub h2: f64,
}

fn check_mpt_inputs(samples: &[Complex64], formats: &[&ModulationAlphabet]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Argument("likelihood of an empty block".into()));
    }
    if formats.is_empty() {
        return Err(Error::Argument("likelihood needs at least one modulation format".into()));
    }
    Ok(())
}

/// `LSE_a(lin * a - quad * a^2)` over the axis levels.
#[inline]
fn axis_lse(levels: &[f64], quad: f64, lin: f64) -> f64 {
    let mut exps = [0.0f64; 16];
    let mut max = f64::NEG_INFINITY;
    for (e, &a) in exps.iter_mut().zip(levels) {
        *e = a * (lin - quad * a);
        max = max.max(*e);
    }
    let sum: f64 = exps[..levels.len()].iter().map(|&e| (e - max).exp()).sum();
    max + sum.ln()
}

/// `log sum_{x in X} exp(-|r - g x|^2 / sn)`.
///
/// For square grids `|r - g(a + jb)|^2` splits into an `a` part and a `b`
/// part, so the double sum over the grid is a product of two axis sums.
#[inline]
fn log_point_sum(r: Complex64, g: Complex64, alphabet: &ModulationAlphabet, inv_var: f64) -> f64 {
    match alphabet.axis_levels() {
        Some(levels) if levels.len() <= 16 => {
            let z = r.conj() * g;
            let quad = g.norm_sqr() * inv_var;
            -r.norm_sqr() * inv_var
                + axis_lse(levels, quad, 2.0 * z.re * inv_var)
                + axis_lse(levels, quad, -2.0 * z.im * inv_var)
        }
        _ => {
            let mut acc = LogSumExp::new();
            for &x in alphabet.points() {
                acc.push(-(r - g * x).norm_sqr() * inv_var);
            }
            acc.value()
        }
    }
}

/// Per-format log-likelihoods `log p(y | h1, X_k, H1')`.
fn serving_format_loglik(
    samples: &[Complex64],
    g1: Complex64,
    formats: &[&ModulationAlphabet],
    sigma_n_sq: f64,
) -> Vec<f64> {
    let inv_var = 1.0 / sigma_n_sq;
    let ln_noise_norm = (std::f64::consts::PI * sigma_n_sq).ln();
    formats
        .iter()
        .map(|alphabet| {
            let ln_card = (alphabet.len() as f64).ln();
            samples
                .iter()
                .map(|&y| log_point_sum(y, g1, alphabet, inv_var) - ln_card - ln_noise_norm)
                .sum()
        })
        .collect()
}

fn mixture(values: &[f64], count: usize) -> f64 {
    let mut acc = LogSumExp::new();
    values.iter().for_each(|&v| acc.push(v));
    acc.value() - (count as f64).ln()
}

/// Log joint densities under both hypotheses, with the true channels and an
/// equiprobable prior over `formats` for each transmitter.
///
/// Within a block each transmitter keeps one format and symbols are i.i.d.
/// uniform over it, so
///
/// `p(y | H1') = 1/M sum_k prod_i 1/|X_k| sum_x f(y_i - h1 x)` and
/// `p(y | H2)  = 1/M^2 sum_{k,l} prod_i 1/(|X_k||X_l|) sum_{x1,x2} f(y_i - h1 x1 - h2 x2)`,
///
/// with symbols scaled by `sqrt(Ex)` and `f` the `CN(0, sn)` density. All
/// products and sums are carried out in the log domain.
pub fn mpt_log_densities(
    samples: &[Complex64],
    h1: Complex64,
    h2: Complex64,
    scenario: &SensingScenario,
    formats: &[&ModulationAlphabet],
) -> Result<MixtureLogDensities> {
    check_mpt_inputs(samples, formats)?;
    let m = formats.len();
    let sigma_n_sq = scenario.sigma_n_sq();
    let amp = scenario.symbol_energy().sqrt();
    let g1 = h1 * amp;
    let g2 = h2 * amp;

    let serving = serving_format_loglik(samples, g1, formats, sigma_n_sq);
    let h1_prime = mixture(&serving, m);

    if g2 == Complex64::new(0.0, 0.0) {
        // Without an interferer every (k, l) term equals the k-th H1' term.
        let pairs: Vec<f64> = serving.iter().flat_map(|&v| std::iter::repeat_n(v, m)).collect();
        return Ok(MixtureLogDensities {
            h1_prime,
            h2: mixture(&pairs, m * m),
        });
    }

    let inv_var = 1.0 / sigma_n_sq;
    let ln_noise_norm = (std::f64::consts::PI * sigma_n_sq).ln();
    let mut pair_loglik = vec![0.0; m * m];
    let mut per_pair = vec![LogSumExp::new(); m * m];
    for &y in samples {
        per_pair.iter_mut().for_each(|acc| *acc = LogSumExp::new());
        for (k, serving_alphabet) in formats.iter().enumerate() {
            for &x1 in serving_alphabet.points() {
                let r = y - g1 * x1;
                for (l, interferer_alphabet) in formats.iter().enumerate() {
                    per_pair[k * m + l].push(log_point_sum(r, g2, interferer_alphabet, inv_var));
                }
            }
        }
        for (k, serving_alphabet) in formats.iter().enumerate() {
            for (l, interferer_alphabet) in formats.iter().enumerate() {
                let ln_card = ((serving_alphabet.len() * interferer_alphabet.len()) as f64).ln();
                pair_loglik[k * m + l] += per_pair[k * m + l].value() - ln_card - ln_noise_norm;
            }
        }
    }

    Ok(MixtureLogDensities {
        h1_prime,
        h2: mixture(&pair_loglik, m * m),
    })
}

/// Same densities as [`mpt_log_densities`], enumerating every constellation
/// point (pair) without the per-axis factorization. Much slower; kept as a
/// reference evaluation.
pub fn mpt_log_densities_unfactored(
    samples: &[Complex64],
    h1: Complex64,
    h2: Complex64,
    scenario: &SensingScenario,
    formats: &[&ModulationAlphabet],
) -> Result<MixtureLogDensities> {
    check_mpt_inputs(samples, formats)?;
    let m = formats.len();
    let sigma_n_sq = scenario.sigma_n_sq();
    let inv_var = 1.0 / sigma_n_sq;
    let ln_noise_norm = (std::f64::consts::PI * sigma_n_sq).ln();
    let amp = scenario.symbol_energy().sqrt();
    let (g1, g2) = (h1 * amp, h2 * amp);

    let mut serving = vec![0.0; m];
    let mut pairs = vec![0.0; m * m];
    for &y in samples {
        for (k, a1) in formats.iter().enumerate() {
            let mut acc = LogSumExp::new();
            for &x1 in a1.points() {
                acc.push(-(y - g1 * x1).norm_sqr() * inv_var);
            }
            serving[k] += acc.value() - (a1.len() as f64).ln() - ln_noise_norm;
            for (l, a2) in formats.iter().enumerate() {
                let mut acc = LogSumExp::new();
                for &x1 in a1.points() {
                    for &x2 in a2.points() {
                        acc.push(-(y - g1 * x1 - g2 * x2).norm_sqr() * inv_var);
                    }
                }
                pairs[k * m + l] += acc.value() - ((a1.len() * a2.len()) as f64).ln() - ln_noise_norm;
            }
        }
    }
    Ok(MixtureLogDensities {
        h1_prime: mixture(&serving, m),
        h2: mixture(&pairs, m * m),
    })
}

/// Log-likelihood ratio `log p(y|H2) - log p(y|H1')` against `log t`.
pub fn mpt_decide(logp_h1_prime: f64, logp_h2: f64, log_threshold: f64) -> TestStatistic {
    decide(logp_h2 - logp_h1_prime, log_threshold)
}
