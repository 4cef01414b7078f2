//! Monte-Carlo estimation of false-alarm and detection rates.
//!
//! Each trial draws one fading realization and synthesizes one block under
//! each hypothesis of the pair from that same realization. All randomness
//! comes from [`RandomStreams`] keyed by `(seed, purpose, trial)`, so results
//! do not depend on how rayon schedules the trials.
//!
//! ROC sweeps compute one score per block and apply every threshold to the
//! same cached scores. A block is declared `High` iff `score > cut(param)`:
//!
//! | detector   | score                          | cut             |
//! |------------|--------------------------------|-----------------|
//! | ED1        | `e`                            | `t1`            |
//! | Type-1 ED  | `e`                            | `t(delta)`      |
//! | ED2 linear | `e - lambda1 - 2N`             | `t2`            |
//! | ED2 exact  | `-Q_N(sqrt(lambda1), sqrt(e))` | `-delta`        |
//! | MPT        | log-likelihood ratio           | `log t`         |
//!
//! For ED2 (exact), `e > t(lambda1, delta)` iff the p-value
//! `Q_N(sqrt(lambda1), sqrt(e))` is below `delta`, so one Marcum evaluation
//! per block replaces an inversion per block and threshold.

use rayon::prelude::*;

use crate::analysis::{analytic_rates, AnalysisOptions, AnalyticResult};
use crate::detectors::{
    energy_statistic, mpt_log_densities, serving_noncentrality, type1_threshold, validate_param, Decision,
    DetectorConfig, DetectorVariant,
};
use crate::scenario::{
    corrupt_channel_estimate, draw_fading, estimation_sinr_db, nmse_from_sinr, synthesize_block, Hypothesis,
    ObservationBlock, SensingScenario,
};
use crate::specfun::{marcum_q, Tolerance};
use crate::streams::{RandomStreams, StreamPurpose};
use crate::{Error, Result};

/// Fewest trials for which confidence intervals are reported.
pub const MIN_TRIALS: u64 = 100;

/// Two-sided 95% standard-normal quantile.
const Z_95: f64 = 1.959_963_984_540_054;

/// How the channel estimate `h1_est` seen by the ED2 detectors is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimation {
    /// `h1_est = h1`.
    Ideal,
    /// `h1_est = h1 + e` with the NMSE given by the SINR fit for the
    /// hypothesis in force (the interferer counts as noise under `H2`).
    NmseModel,
    /// `h1_est = h1 + e` with a fixed NMSE under both hypotheses.
    FixedNmse(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HypothesisPair {
    /// `H0` (vacant) against `H1` (interferer only).
    Type1,
    /// `H1'` (serving only) against `H2` (serving and interferer).
    Type2,
}

impl HypothesisPair {
    pub fn null(self) -> Hypothesis {
        match self {
            HypothesisPair::Type1 => Hypothesis::H0,
            HypothesisPair::Type2 => Hypothesis::H1Prime,
        }
    }

    pub fn alternative(self) -> Hypothesis {
        match self {
            HypothesisPair::Type1 => Hypothesis::H1,
            HypothesisPair::Type2 => Hypothesis::H2,
        }
    }

    /// The pair a detector is designed for.
    pub fn for_variant(variant: DetectorVariant) -> Self {
        match variant {
            DetectorVariant::Type1Ed => HypothesisPair::Type1,
            _ => HypothesisPair::Type2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialPlan {
    pub scenario: SensingScenario,
    pub detector: DetectorConfig,
    pub trials: u64,
    pub seed: u64,
    pub estimation: Estimation,
    pub hypothesis_pair: HypothesisPair,
}

impl TrialPlan {
    /// Ideal estimation and the detector's own hypothesis pair.
    pub fn new(scenario: SensingScenario, detector: DetectorConfig, trials: u64, seed: u64) -> Result<Self> {
        let plan = Self {
            scenario,
            detector,
            trials,
            seed,
            estimation: Estimation::Ideal,
            hypothesis_pair: HypothesisPair::for_variant(detector.variant),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn with_estimation(mut self, estimation: Estimation) -> Result<Self> {
        self.estimation = estimation;
        self.validate()?;
        Ok(self)
    }

    pub fn with_hypothesis_pair(mut self, pair: HypothesisPair) -> Self {
        self.hypothesis_pair = pair;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < MIN_TRIALS {
            return Err(Error::validation(
                "trials",
                format!("at least {MIN_TRIALS} trials are needed for confidence intervals, got {}", self.trials),
            ));
        }
        validate_param(self.detector.variant, self.detector.threshold_param)?;
        if let Estimation::FixedNmse(v) = self.estimation {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::validation("nmse", format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    fn nmse_for(&self, truth: Hypothesis) -> f64 {
        match self.estimation {
            Estimation::Ideal => 0.0,
            Estimation::FixedNmse(v) => v,
            Estimation::NmseModel if truth.serving_active() => {
                nmse_from_sinr(estimation_sinr_db(&self.scenario, truth)).nmse
            }
            Estimation::NmseModel => 0.0,
        }
    }
}

/// An empirical rate with its 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub count: u64,
    pub trials: u64,
}

impl RateEstimate {
    pub fn from_counts(count: u64, trials: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(count, trials);
        let p_hat = count as f64 / trials as f64;
        Self {
            p_hat,
            ci_low: ci_low.min(p_hat),
            ci_high: ci_high.max(p_hat),
            count,
            trials,
        }
    }

    pub fn contains(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }
}

/// 95% Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // The bounds are exactly 0 and 1 at the extremes; avoid round-off there.
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes >= trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

fn trial_blocks(plan: &TrialPlan, streams: &RandomStreams, trial: u64) -> (ObservationBlock, ObservationBlock) {
    let s = &plan.scenario;
    let fading = draw_fading(s, &mut streams.stream(StreamPurpose::Fading, trial));
    let pair = plan.hypothesis_pair;
    let block = |truth: Hypothesis, estimate: StreamPurpose, data: StreamPurpose| {
        let nmse = plan.nmse_for(truth);
        let seen = corrupt_channel_estimate(&fading, nmse, s.sigma1_sq(), &mut streams.stream(estimate, trial));
        synthesize_block(s, &seen, truth, &mut streams.stream(data, trial))
    };
    (
        block(pair.null(), StreamPurpose::NullEstimate, StreamPurpose::NullBlock),
        block(pair.alternative(), StreamPurpose::AltEstimate, StreamPurpose::AltBlock),
    )
}

fn run_trials<T: Send>(plan: &TrialPlan, f: impl Fn(u64, ObservationBlock, ObservationBlock) -> Result<T> + Sync) -> Result<Vec<T>> {
    plan.validate()?;
    let streams = RandomStreams::new(plan.seed);
    (0..plan.trials)
        .into_par_iter()
        .map(|i| {
            let (null, alt) = trial_blocks(plan, &streams, i);
            f(i, null, alt).map_err(|e| Error::Trial {
                trial: i,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Empirical `(Pf, Pd)` of the plan's detector at its threshold parameter.
pub fn estimate_rates(plan: &TrialPlan) -> Result<(RateEstimate, RateEstimate)> {
    let s = &plan.scenario;
    let outcomes = run_trials(plan, |_, null, alt| {
        let high = |b: &ObservationBlock| plan.detector.evaluate(b, s).map(|t| t.decision == Decision::High);
        Ok((high(&null)?, high(&alt)?))
    })?;
    let false_alarms = outcomes.iter().filter(|o| o.0).count() as u64;
    let detections = outcomes.iter().filter(|o| o.1).count() as u64;
    Ok((
        RateEstimate::from_counts(false_alarms, plan.trials),
        RateEstimate::from_counts(detections, plan.trials),
    ))
}

/// Threshold-free score of a block; see the module table.
fn block_score(variant: DetectorVariant, block: &ObservationBlock, scenario: &SensingScenario) -> Result<f64> {
    let e = || energy_statistic(&block.samples, scenario.sigma_n_sq());
    Ok(match variant {
        DetectorVariant::Ed1 | DetectorVariant::Type1Ed => e(),
        DetectorVariant::Ed2Linear => {
            e() - serving_noncentrality(scenario, block.fading.h1_est) - 2.0 * scenario.n_samples() as f64
        }
        DetectorVariant::Ed2Exact => {
            let lambda = serving_noncentrality(scenario, block.fading.h1_est);
            -marcum_q(scenario.n_samples(), lambda.sqrt(), e().sqrt(), &Tolerance::default())?
        }
        DetectorVariant::Mpt => {
            let alphabets = scenario.modulation_policy().alphabets();
            let f = &block.fading;
            let d = mpt_log_densities(&block.samples, f.h1, f.h2, scenario, &alphabets)?;
            d.h2 - d.h1_prime
        }
    })
}

/// Cut on the block score equivalent to the threshold parameter.
fn score_cut(variant: DetectorVariant, param: f64, scenario: &SensingScenario) -> Result<f64> {
    validate_param(variant, param)?;
    Ok(match variant {
        DetectorVariant::Ed1 | DetectorVariant::Ed2Linear | DetectorVariant::Mpt => param,
        DetectorVariant::Type1Ed => type1_threshold(scenario, param)?,
        DetectorVariant::Ed2Exact => -param,
    })
}

/// Cached per-trial scores under both hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrials {
    pub variant: DetectorVariant,
    pub null: Vec<f64>,
    pub alternative: Vec<f64>,
}

/// An empirical operating point read off cached scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub cut: f64,
    pub pf: RateEstimate,
    pub pd: RateEstimate,
}

impl ScoredTrials {
    pub fn trials(&self) -> u64 {
        self.null.len() as u64
    }

    /// Rates for one cut on the score.
    pub fn rates_at_cut(&self, cut: f64) -> (RateEstimate, RateEstimate) {
        let count = |v: &[f64]| v.iter().filter(|&&s| s > cut).count() as u64;
        let n = self.trials();
        (
            RateEstimate::from_counts(count(&self.null), n),
            RateEstimate::from_counts(count(&self.alternative), n),
        )
    }

    /// The operating point whose empirical false-alarm rate is the largest
    /// not exceeding `target_pf`: the cut is the `(k+1)`-th largest null score
    /// with `k = floor(target_pf * n)`.
    pub fn operating_point(&self, target_pf: f64) -> Result<OperatingPoint> {
        if !(target_pf > 0.0 && target_pf < 1.0) {
            return Err(Error::validation("target_pf", format!("must lie in (0, 1), got {target_pf}")));
        }
        let mut sorted = self.null.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let k = ((target_pf * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
        let cut = sorted[k];
        let (pf, pd) = self.rates_at_cut(cut);
        Ok(OperatingPoint { cut, pf, pd })
    }
}

/// Runs the plan once and returns every block score.
pub fn score_trials(plan: &TrialPlan) -> Result<ScoredTrials> {
    let variant = plan.detector.variant;
    let s = &plan.scenario;
    let scores = run_trials(plan, |_, null, alt| Ok((block_score(variant, &null, s)?, block_score(variant, &alt, s)?)))?;
    let (null, alternative) = scores.into_iter().unzip();
    Ok(ScoredTrials {
        variant,
        null,
        alternative,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RocSource {
    MonteCarlo,
    Analytic,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold_param: f64,
    pub pf_mc: Option<RateEstimate>,
    pub pd_mc: Option<RateEstimate>,
    pub pf_analytic: Option<AnalyticResult>,
    pub pd_analytic: Option<AnalyticResult>,
}

/// ROC points ordered from the most permissive to the strictest threshold.
/// For detectors parameterized by a false-alarm target this is descending
/// `delta`; for the others, ascending threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub variant: DetectorVariant,
    pub points: Vec<RocPoint>,
    pub source: RocSource,
}

fn order_params(variant: DetectorVariant, params: &[f64], scenario: &SensingScenario) -> Result<Vec<(f64, f64)>> {
    if params.is_empty() {
        return Err(Error::validation("thresholds", "at least one threshold is required"));
    }
    let mut with_cut = params
        .iter()
        .map(|&p| score_cut(variant, p, scenario).map(|c| (p, c)))
        .collect::<Result<Vec<_>>>()?;
    with_cut.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(with_cut)
}

/// Empirical ROC over `params`, optionally with the analytic rates.
pub fn roc_sweep(plan: &TrialPlan, params: &[f64], analytic: Option<&AnalysisOptions>) -> Result<RocCurve> {
    let variant = plan.detector.variant;
    let ordered = order_params(variant, params, &plan.scenario)?;
    let scored = score_trials(plan)?;
    let mut any_analytic = false;
    let points = ordered
        .into_iter()
        .map(|(param, cut)| {
            let (pf, pd) = scored.rates_at_cut(cut);
            let exact = match analytic {
                Some(opts) if plan.hypothesis_pair == HypothesisPair::for_variant(variant) => {
                    analytic_rates(variant, param, &plan.scenario, opts)?
                }
                _ => None,
            };
            any_analytic |= exact.is_some();
            Ok(RocPoint {
                threshold_param: param,
                pf_mc: Some(pf),
                pd_mc: Some(pd),
                pf_analytic: exact.map(|e| e.0),
                pd_analytic: exact.map(|e| e.1),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RocCurve {
        variant,
        points,
        source: if any_analytic { RocSource::Both } else { RocSource::MonteCarlo },
    })
}

/// Analytic ROC without simulation. Fails for the MPT.
pub fn analytic_roc(
    variant: DetectorVariant,
    params: &[f64],
    scenario: &SensingScenario,
    opts: &AnalysisOptions,
) -> Result<RocCurve> {
    let points = order_params(variant, params, scenario)?
        .into_iter()
        .map(|(param, _)| {
            let (pf, pd) = analytic_rates(variant, param, scenario, opts)?
                .ok_or_else(|| Error::Argument(format!("{variant} has no analytic rates")))?;
            Ok(RocPoint {
                threshold_param: param,
                pf_mc: None,
                pd_mc: None,
                pf_analytic: Some(pf),
                pd_analytic: Some(pd),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RocCurve {
        variant,
        points,
        source: RocSource::Analytic,
    })
}

/// Sample count of the reduced-block arm of the estimation-error study.
pub const REDUCED_N_SAMPLES: usize = 100;

/// Effect of channel-estimation error and of a shorter block on an ED2
/// detector.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationErrorStudy {
    pub ideal: RocCurve,
    pub nmse: RocCurve,
    pub nmse_reduced: RocCurve,
    pub target_pf: f64,
    pub ideal_point: OperatingPoint,
    pub nmse_point: OperatingPoint,
    pub reduced_point: OperatingPoint,
}

impl EstimationErrorStudy {
    /// `Pd(ideal) - Pd(nmse)` at the target false-alarm rate.
    pub fn nmse_drop(&self) -> f64 {
        self.ideal_point.pd.p_hat - self.nmse_point.pd.p_hat
    }

    /// `Pd(nmse, N) - Pd(nmse, reduced N)` at the target false-alarm rate.
    pub fn reduced_samples_drop(&self) -> f64 {
        self.nmse_point.pd.p_hat - self.reduced_point.pd.p_hat
    }
}

fn curve_from_scores(variant: DetectorVariant, scored: &ScoredTrials, ordered: &[(f64, f64)]) -> RocCurve {
    let points = ordered
        .iter()
        .map(|&(param, cut)| {
            let (pf, pd) = scored.rates_at_cut(cut);
            RocPoint {
                threshold_param: param,
                pf_mc: Some(pf),
                pd_mc: Some(pd),
                pf_analytic: None,
                pd_analytic: None,
            }
        })
        .collect();
    RocCurve {
        variant,
        points,
        source: RocSource::MonteCarlo,
    }
}

/// Runs ideal and NMSE-model estimation at the scenario's `N`, and the NMSE
/// model at [`REDUCED_N_SAMPLES`], all under the same seed. Operating points
/// are read off the empirical curves at `target_pf`.
pub fn estimation_error_study(
    scenario: &SensingScenario,
    variant: DetectorVariant,
    params: &[f64],
    trials: u64,
    seed: u64,
    target_pf: f64,
) -> Result<EstimationErrorStudy> {
    if !matches!(variant, DetectorVariant::Ed2Exact | DetectorVariant::Ed2Linear) {
        return Err(Error::validation(
            "detector",
            format!("the estimation-error study applies to ED2 detectors, got {variant}"),
        ));
    }
    let reduced = scenario.with_n_samples(REDUCED_N_SAMPLES)?;
    let detector = DetectorConfig::new(variant, params.first().copied().unwrap_or(0.05))?;
    let arm = |s: &SensingScenario, estimation: Estimation| -> Result<(RocCurve, OperatingPoint)> {
        let plan = TrialPlan::new(*s, detector, trials, seed)?.with_estimation(estimation)?;
        let ordered = order_params(variant, params, s)?;
        let scored = score_trials(&plan)?;
        Ok((curve_from_scores(variant, &scored, &ordered), scored.operating_point(target_pf)?))
    };
    let (ideal, ideal_point) = arm(scenario, Estimation::Ideal)?;
    let (nmse, nmse_point) = arm(scenario, Estimation::NmseModel)?;
    let (nmse_reduced, reduced_point) = arm(&reduced, Estimation::NmseModel)?;
    Ok(EstimationErrorStudy {
        ideal,
        nmse,
        nmse_reduced,
        target_pf,
        ideal_point,
        nmse_point,
        reduced_point,
    })
}
