//! End-to-end acceptance run. Each criterion prints one line,
//! `criterion <n> PASS|FAIL: <measurements>`, and the process exits non-zero
//! if any criterion fails.
//!
//! All simulations use seed 1, fixed before any result was inspected.

use std::process::ExitCode;
use std::time::Instant;

use inband_sense::analysis::{calibrate_threshold, pf_ed1_closed, pf_ed1_quadrature, AnalysisOptions};
use inband_sense::detectors::{
    decide, ed2_exact_threshold, energy_statistic, mpt_log_densities, Decision, DetectorConfig, DetectorVariant,
};
use inband_sense::montecarlo::{
    analytic_roc, estimation_error_study, roc_sweep, score_trials, Estimation, RocCurve, ScoredTrials, TrialPlan,
};
use inband_sense::scenario::{
    build_scenario, draw_fading, synthesize_block, Hypothesis, ModulationName, ModulationPolicy, ScenarioParams,
    SensingScenario,
};
use inband_sense::specfun::{central_chi2_sf, inv_marcum_q_threshold, marcum_q, Tolerance};
use inband_sense::streams::{RandomStreams, StreamPurpose};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

const SEED: u64 = 1;
const TRIALS: u64 = 10_000;
const MPT_TRIALS: u64 = 2_000;
const SCENARIOS: [(f64, f64); 2] = [(0.0, 6.0), (6.0, 12.0)];

fn scenario(sir_db: f64, snr_db: f64, policy: ModulationPolicy) -> SensingScenario {
    build_scenario(&ScenarioParams {
        sir_db,
        snr_db,
        modulation_policy: policy,
        ..Default::default()
    })
    .unwrap()
}

fn qam4(sir_db: f64, snr_db: f64) -> SensingScenario {
    scenario(sir_db, snr_db, ModulationPolicy::Fixed(ModulationName::Qam4))
}

fn uniform(sir_db: f64, snr_db: f64) -> SensingScenario {
    scenario(sir_db, snr_db, ModulationPolicy::UniformOverFormats)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn scored(s: SensingScenario, variant: DetectorVariant, param: f64, trials: u64) -> ScoredTrials {
    let plan = TrialPlan::new(s, DetectorConfig::new(variant, param).unwrap(), trials, SEED).unwrap();
    score_trials(&plan).unwrap()
}

struct Report {
    failed: Vec<u32>,
}

impl Report {
    fn line(&mut self, n: u32, pass: bool, detail: String, started: Instant) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {n} {verdict}: {detail} ({:.1} s)", started.elapsed().as_secs_f64());
        if !pass {
            self.failed.push(n);
        }
    }
}

/// Closed-form and quadrature ED1 false-alarm rates agree to 1e-8 on 50
/// thresholds spanning Pf in [1e-4, 1] for both scenarios.
fn closed_form_matches_quadrature(report: &mut Report) {
    let started = Instant::now();
    let opts = AnalysisOptions::default();
    let mut worst = 0f64;
    for (sir, snr) in SCENARIOS {
        let s = qam4(sir, snr);
        let t_max = calibrate_threshold(DetectorVariant::Ed1, 1e-4, &s, &opts).unwrap();
        for t in linspace(0.0, t_max, 50) {
            let closed = pf_ed1_closed(t, &s).unwrap().value;
            let quad = pf_ed1_quadrature(t, &s, &opts).unwrap().value;
            worst = worst.max((closed - quad).abs());
        }
    }
    report.line(1, worst <= 1e-8, format!("max |closed - quadrature| = {worst:.3e} (limit 1e-8)"), started);
}

/// Rows of an ROC where both analytic rates fall inside the simulated 95%
/// intervals.
fn rows_within_ci(curve: &RocCurve) -> usize {
    curve
        .points
        .iter()
        .filter(|p| {
            p.pf_mc.unwrap().contains(p.pf_analytic.unwrap().value) && p.pd_mc.unwrap().contains(p.pd_analytic.unwrap().value)
        })
        .count()
}

/// Simulated and analytic ROCs agree within the Wilson interval on at least
/// 90% of a 20-point grid of false-alarm targets, in both scenarios.
fn analytic_matches_simulation(report: &mut Report, n: u32, variant: DetectorVariant) {
    let started = Instant::now();
    let opts = AnalysisOptions::default();
    let targets = linspace(0.05, 0.95, 20);
    let mut pass = true;
    let mut details = Vec::new();
    for (sir, snr) in SCENARIOS {
        let s = qam4(sir, snr);
        let params: Vec<f64> = targets
            .iter()
            .map(|&p| calibrate_threshold(variant, p, &s, &opts).unwrap())
            .collect();
        let plan = TrialPlan::new(s, DetectorConfig::new(variant, params[0]).unwrap(), TRIALS, SEED).unwrap();
        let curve = roc_sweep(&plan, &params, Some(&opts)).unwrap();
        let ok = rows_within_ci(&curve);
        pass &= ok as f64 >= 0.9 * targets.len() as f64;
        details.push(format!("({sir} dB, {snr} dB) {ok}/{}", targets.len()));
    }
    report.line(n, pass, format!("{variant} rows within CI: {} (need 90%)", details.join(", ")), started);
}

/// Operating points at Pf = 0.05 in the (0 dB, 6 dB) scenario.
fn ideal_operating_points(report: &mut Report, mpt: &ScoredTrials) {
    let started = Instant::now();
    let s = qam4(0.0, 6.0);
    let pd = |variant, param| scored(s, variant, param, TRIALS).operating_point(0.05).unwrap().pd.p_hat;
    let ed1 = pd(DetectorVariant::Ed1, 0.0);
    let exact = pd(DetectorVariant::Ed2Exact, 0.05);
    let linear = pd(DetectorVariant::Ed2Linear, 0.0);
    let mpt_pd = mpt.operating_point(0.05).unwrap().pd.p_hat;

    let checks = [
        ((exact - 0.87).abs() <= 0.03, format!("ED2 exact Pd {exact:.4} in 0.87 +/- 0.03")),
        (mpt_pd > 0.90, format!("MPT Pd {mpt_pd:.4} > 0.90")),
        (ed1 < exact - 0.1, format!("ED1 Pd {ed1:.4} < ED2 exact - 0.1")),
        (
            (linear - exact).abs() < 0.02,
            format!("|ED2 linear {linear:.4} - ED2 exact| = {:.4} < 0.02", (linear - exact).abs()),
        ),
    ];
    let pass = checks.iter().all(|c| c.0);
    let detail = checks
        .iter()
        .map(|(ok, text)| format!("{text} [{}]", if *ok { "ok" } else { "no" }))
        .collect::<Vec<_>>()
        .join("; ");
    report.line(4, pass, detail, started);
}

/// Detection-rate losses of ED2 (linear) at Pf = 0.05 from channel
/// estimation error and from shortening the block to 100 samples.
fn estimation_error_losses(report: &mut Report) {
    let started = Instant::now();
    let mut pass = true;
    let mut details = Vec::new();
    for (sir, snr) in SCENARIOS {
        let s = qam4(sir, snr);
        let study = estimation_error_study(&s, DetectorVariant::Ed2Linear, &[0.0], TRIALS, SEED, 0.05).unwrap();
        let (nmse, reduced) = (study.nmse_drop(), study.reduced_samples_drop());
        pass &= (nmse - 0.1).abs() <= 0.05 && (reduced - 0.05).abs() <= 0.04;
        details.push(format!(
            "({sir} dB, {snr} dB) estimation drop {nmse:.4} (want 0.1 +/- 0.05), N=100 drop {reduced:.4} (want 0.05 +/- 0.04)"
        ));
    }
    report.line(5, pass, details.join("; "), started);
}

fn marcum_identities() -> Result<String, String> {
    // The identities are checked near machine precision, well below the
    // default truncation level.
    let tol = Tolerance {
        abs_tol: 1e-16,
        ..Tolerance::default()
    };
    let q = |n, a, b| marcum_q(n, a, b, &tol).unwrap();
    for n in [1usize, 2, 10, 142] {
        for b in [0.5, 3.0, 12.0, 20.0] {
            let diff = (q(n, 0.0, b) - central_chi2_sf(n, b * b)).abs();
            if diff > 1e-14 {
                return Err(format!("Q_{n}(0, {b}) differs from the chi-square tail by {diff:e}"));
            }
        }
        for a in [0.0, 1.0, 15.0] {
            if q(n, a, 0.0) != 1.0 {
                return Err(format!("Q_{n}({a}, 0) != 1"));
            }
            for b in [1.0, 10.0, 18.0] {
                if q(n + 1, a, b) < q(n, a, b) - 1e-15 {
                    return Err(format!("Q not increasing in order at ({n}, {a}, {b})"));
                }
            }
        }
    }
    // Q_1(a,b) + Q_1(b,a) = 1 + exp(-(a^2+b^2)/2) I_0(ab)
    for (a, b) in [(0.5, 1.5), (2.0, 2.5), (4.0, 1.0)] {
        let x: f64 = a * b;
        let i0: f64 = (0..60)
            .scan(1.0, |term, k| {
                let out = *term;
                *term *= (x / 2.0).powi(2) / ((k + 1) as f64).powi(2);
                Some(out)
            })
            .sum();
        let lhs = q(1, a, b) + q(1, b, a);
        let rhs = 1.0 + (-(a * a + b * b) / 2.0).exp() * i0;
        if (lhs - rhs).abs() > 1e-13 {
            return Err(format!("symmetry identity off by {:e} at ({a}, {b})", lhs - rhs));
        }
    }
    for (n, lambda, delta) in [(1usize, 0.0, 0.1353352832366127), (142, 100.0, 0.05), (20, 5.0, 1e-6)] {
        let t = inv_marcum_q_threshold(n, lambda, delta, &tol).unwrap();
        let back = q(n, f64::sqrt(lambda), t.sqrt());
        if (back - delta).abs() > 1e-9 * delta.max(1e-3) {
            return Err(format!("inverse round trip {back} vs {delta}"));
        }
    }
    // Q_N(a, b) = P(X > b^2), X non-central chi-square with 2N dof and
    // non-centrality a^2.
    let draws = 1_000_000u64;
    for (i, (n, a, b)) in [(1usize, 1.0, 1.5), (4, 2.0, 3.5), (142, 10.0, 20.0)].into_iter().enumerate() {
        let streams = RandomStreams::new(SEED + i as u64);
        let hits = (0..draws)
            .into_par_iter()
            .filter(|&k| {
                let mut rng = streams.stream(StreamPurpose::Auxiliary, k);
                let first: f64 = rng.sample::<f64, _>(StandardNormal) + a;
                let rest: f64 = (1..2 * n).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum();
                first * first + rest > b * b
            })
            .count();
        let expect = q(n, a, b);
        let got = hits as f64 / draws as f64;
        let sigma = (expect * (1.0 - expect) / draws as f64).sqrt();
        if (got - expect).abs() > 3.0 * sigma {
            return Err(format!("simulated Q_{n}({a}, {b}) = {got} vs {expect}"));
        }
    }
    Ok("Marcum identities and sampling oracle".into())
}

fn ed2_exact_false_alarm_per_channel() -> Result<String, String> {
    let s = qam4(0.0, 6.0);
    let delta = 0.05;
    let blocks = 4_000u64;
    let detector = DetectorConfig::new(DetectorVariant::Ed2Exact, delta).unwrap();
    let streams = RandomStreams::new(SEED);
    let sigma = (delta * (1.0 - delta) / blocks as f64).sqrt();
    let mut worst = 0f64;
    for c in 0..10u64 {
        let fading = draw_fading(&s, &mut streams.stream(StreamPurpose::Fading, c));
        let threshold = ed2_exact_threshold(&s, fading.h1_est, delta).unwrap();
        let alarms: Result<Vec<bool>, String> = (0..blocks)
            .into_par_iter()
            .map(|k| {
                let mut rng = streams.stream(StreamPurpose::NullBlock, c * blocks + k);
                let block = synthesize_block(&s, &fading, Hypothesis::H1Prime, &mut rng);
                let fast = decide(energy_statistic(&block.samples, s.sigma_n_sq()), threshold).decision;
                if k < 50 && detector.evaluate(&block, &s).unwrap().decision != fast {
                    return Err(format!("detector and fixed threshold disagree on channel {c}"));
                }
                Ok(fast == Decision::High)
            })
            .collect();
        let rate = alarms?.iter().filter(|&&a| a).count() as f64 / blocks as f64;
        let z = (rate - delta).abs() / sigma;
        worst = worst.max(z);
        if z > 3.0 {
            return Err(format!("channel {c}: Pf {rate} is {z:.2} sigma from {delta}"));
        }
    }
    Ok(format!("per-channel ED2 exact Pf within {worst:.2} sigma"))
}

fn nonincreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] <= w[0])
}

fn roc_monotonicity() -> Result<String, String> {
    let s = qam4(0.0, 6.0);
    let opts = AnalysisOptions::default();
    let grids = [
        (DetectorVariant::Ed1, linspace(1000.0, 6000.0, 6)),
        (DetectorVariant::Ed2Linear, linspace(-200.0, 200.0, 6)),
        (DetectorVariant::Ed2Exact, vec![0.01, 0.3, 0.05, 0.6, 0.1]),
        (DetectorVariant::Type1Ed, vec![0.01, 0.05, 0.2, 0.5]),
    ];
    for (variant, params) in &grids {
        let plan = TrialPlan::new(s, DetectorConfig::new(*variant, params[0]).unwrap(), 2_000, SEED).unwrap();
        let plan = if *variant == DetectorVariant::Type1Ed {
            plan.with_hypothesis_pair(inband_sense::montecarlo::HypothesisPair::Type1)
        } else {
            plan
        };
        let mc = roc_sweep(&plan, params, None).unwrap();
        let exact = analytic_roc(*variant, params, &s, &opts).unwrap();
        type Pick = fn(&inband_sense::montecarlo::RocPoint) -> f64;
        let columns: [(&str, &RocCurve, Pick); 4] = [
            ("pf_mc", &mc, |p| p.pf_mc.unwrap().p_hat),
            ("pd_mc", &mc, |p| p.pd_mc.unwrap().p_hat),
            ("pf_analytic", &exact, |p| p.pf_analytic.unwrap().value),
            ("pd_analytic", &exact, |p| p.pd_analytic.unwrap().value),
        ];
        for (name, curve, pick) in columns {
            let values: Vec<f64> = curve.points.iter().map(pick).collect();
            if !nonincreasing(&values) {
                return Err(format!("{variant} {name} not monotone: {values:?}"));
            }
        }
    }
    let mpt = scored(uniform(0.0, 6.0), DetectorVariant::Mpt, 0.0, 200);
    let cuts = linspace(-20.0, 20.0, 9);
    let rates: Vec<_> = cuts.iter().map(|&c| mpt.rates_at_cut(c)).collect();
    let pf: Vec<f64> = rates.iter().map(|r| r.0.p_hat).collect();
    let pd: Vec<f64> = rates.iter().map(|r| r.1.p_hat).collect();
    if !nonincreasing(&pf) || !nonincreasing(&pd) {
        return Err("MPT rates not monotone in the cut".into());
    }
    Ok("ROC monotone".into())
}

fn determinism_across_threads() -> Result<String, String> {
    let run = |threads: usize, plan: &TrialPlan| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| score_trials(plan).unwrap())
    };
    let s = qam4(0.0, 6.0);
    let plans = [
        TrialPlan::new(s, DetectorConfig::new(DetectorVariant::Ed2Linear, 0.0).unwrap(), 2_000, SEED)
            .unwrap()
            .with_estimation(Estimation::NmseModel)
            .unwrap(),
        TrialPlan::new(s, DetectorConfig::new(DetectorVariant::Ed2Exact, 0.05).unwrap(), 1_000, SEED).unwrap(),
        TrialPlan::new(uniform(0.0, 6.0), DetectorConfig::new(DetectorVariant::Mpt, 0.0).unwrap(), 200, SEED).unwrap(),
    ];
    for plan in &plans {
        let (one, four) = (run(1, plan), run(4, plan));
        let same = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        if !same(&one.null, &four.null) || !same(&one.alternative, &four.alternative) {
            return Err(format!("{} scores differ between 1 and 4 threads", plan.detector.variant));
        }
    }
    Ok("1 and 4 threads bit-identical".into())
}

fn mpt_scale_invariance() -> Result<String, String> {
    let s = uniform(0.0, 6.0);
    let streams = RandomStreams::new(SEED);
    let mut worst = 0f64;
    for k in 0..5u64 {
        let fading = draw_fading(&s, &mut streams.stream(StreamPurpose::Fading, k));
        for truth in [Hypothesis::H1Prime, Hypothesis::H2] {
            let block = synthesize_block(&s, &fading, truth, &mut streams.stream(StreamPurpose::AltBlock, k));
            let llr = |samples: &[inband_sense::Complex64], sc: &SensingScenario| {
                let d = mpt_log_densities(samples, fading.h1, fading.h2, sc, &sc.modulation_policy().alphabets()).unwrap();
                d.h2 - d.h1_prime
            };
            let base = llr(&block.samples, &s);
            for alpha in [1e-3, 0.5, 3.7, 1e3] {
                let scaled_s = SensingScenario::new(
                    s.sigma1_sq(),
                    s.sigma2_sq(),
                    s.sigma_n_sq() * alpha * alpha,
                    s.symbol_energy() * alpha * alpha,
                    s.n_samples(),
                    s.modulation_policy(),
                )
                .unwrap();
                let samples: Vec<_> = block.samples.iter().map(|y| y * alpha).collect();
                let rel = (llr(&samples, &scaled_s) - base).abs() / base.abs().max(1.0);
                worst = worst.max(rel);
            }
        }
    }
    if worst > 1e-9 {
        return Err(format!("MPT LLR changes by {worst:e} under rescaling"));
    }
    Ok(format!("MPT LLR scale-invariant to {worst:.1e}"))
}

fn mpt_dominates_ed2(mpt: &ScoredTrials) -> Result<String, String> {
    let s = uniform(0.0, 6.0);
    let exact = scored(s, DetectorVariant::Ed2Exact, 0.05, MPT_TRIALS);
    let linear = scored(s, DetectorVariant::Ed2Linear, 0.0, MPT_TRIALS);
    for pf in [0.01, 0.05, 0.1] {
        let best = mpt.operating_point(pf).unwrap().pd.p_hat;
        for (name, other) in [("exact", &exact), ("linear", &linear)] {
            let pd = other.operating_point(pf).unwrap().pd.p_hat;
            if best < pd {
                return Err(format!("at Pf {pf} MPT Pd {best} < ED2 {name} Pd {pd}"));
            }
        }
    }
    Ok("MPT >= ED2 at Pf 0.01, 0.05, 0.1".into())
}

fn properties(report: &mut Report, mpt: &ScoredTrials) {
    let started = Instant::now();
    let results = [
        marcum_identities(),
        ed2_exact_false_alarm_per_channel(),
        roc_monotonicity(),
        determinism_across_threads(),
        mpt_scale_invariance(),
        mpt_dominates_ed2(mpt),
    ];
    let pass = results.iter().all(Result::is_ok);
    let detail = results
        .iter()
        .map(|r| match r {
            Ok(m) => format!("{m} [ok]"),
            Err(m) => format!("{m} [no]"),
        })
        .collect::<Vec<_>>()
        .join("; ");
    report.line(6, pass, detail, started);
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters are not meaningful for this target.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut report = Report { failed: Vec::new() };
    let mpt = scored(uniform(0.0, 6.0), DetectorVariant::Mpt, 0.0, MPT_TRIALS);

    closed_form_matches_quadrature(&mut report);
    analytic_matches_simulation(&mut report, 2, DetectorVariant::Ed1);
    analytic_matches_simulation(&mut report, 3, DetectorVariant::Ed2Linear);
    ideal_operating_points(&mut report, &mpt);
    estimation_error_losses(&mut report);
    properties(&mut report, &mpt);

    if report.failed.is_empty() {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {:?}", report.failed);
        ExitCode::FAILURE
    }
}
