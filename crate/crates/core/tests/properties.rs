use inband_sense::analysis::{pd_ed1, pf_ed1_closed, pf_ed2_linear, AnalysisOptions};
use inband_sense::detectors::{decide, ed1_decide, energy_statistic, mpt_decide, Decision};
use inband_sense::montecarlo::{wilson_interval, RateEstimate};
use inband_sense::scenario::{build_scenario, ModulationName, ModulationPolicy, ScenarioParams, SensingScenario};
use inband_sense::specfun::{inv_marcum_q_threshold, marcum_q, Tolerance};
use inband_sense::Complex64;
use proptest::prelude::*;

fn tight() -> Tolerance {
    Tolerance {
        abs_tol: 1e-15,
        ..Tolerance::default()
    }
}

fn scenario(sir_db: f64, snr_db: f64, n_samples: usize) -> SensingScenario {
    build_scenario(&ScenarioParams {
        sir_db,
        snr_db,
        n_samples,
        modulation_policy: ModulationPolicy::Fixed(ModulationName::Qam4),
        ..Default::default()
    })
    .unwrap()
}

proptest! {
    #[test]
    fn marcum_is_a_probability_monotone_in_both_arguments(
        n in 1usize..60,
        a in 0.0f64..15.0,
        b in 0.0f64..25.0,
        da in 0.0f64..3.0,
        db in 0.0f64..3.0,
    ) {
        let q = |a, b| marcum_q(n, a, b, &tight()).unwrap();
        let base = q(a, b);
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert!(q(a, b + db) <= base + 1e-14);
        prop_assert!(q(a + da, b) >= base - 1e-14);
        prop_assert!(marcum_q(n + 1, a, b, &tight()).unwrap() >= base - 1e-14);
    }

    #[test]
    fn inverse_marcum_round_trips(n in 1usize..200, lambda in 0.0f64..400.0, delta in 1e-6f64..0.999) {
        let t = inv_marcum_q_threshold(n, lambda, delta, &tight()).unwrap();
        prop_assert!(t >= 0.0);
        let back = marcum_q(n, lambda.sqrt(), t.sqrt(), &tight()).unwrap();
        prop_assert!((back - delta).abs() <= 1e-9, "{} vs {}", back, delta);
    }

    #[test]
    fn raising_a_threshold_never_turns_low_into_high(v in -1e4f64..1e4, t in -1e4f64..1e4, dt in 0.0f64..1e3) {
        for f in [decide, ed1_decide] {
            let low = f(v, t).decision;
            let high = f(v, t + dt).decision;
            prop_assert!(!(low == Decision::Low && high == Decision::High));
            prop_assert_eq!(low == Decision::High, v > t);
        }
        let lo = mpt_decide(0.0, v, t).decision;
        let hi = mpt_decide(0.0, v, t + dt).decision;
        prop_assert!(!(lo == Decision::Low && hi == Decision::High));
    }

    #[test]
    fn energy_statistic_is_scale_free(
        parts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..50),
        sigma in 0.01f64..10.0,
        alpha in 0.01f64..100.0,
    ) {
        let y: Vec<Complex64> = parts.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
        let scaled: Vec<Complex64> = y.iter().map(|v| v * alpha).collect();
        let e = energy_statistic(&y, sigma);
        prop_assert!(e >= 0.0);
        let e2 = energy_statistic(&scaled, sigma * alpha * alpha);
        prop_assert!((e - e2).abs() <= 1e-10 * e.max(1.0));
    }

    #[test]
    fn wilson_interval_is_ordered_and_symmetric(n in 1u64..100_000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).round() as u64;
        let (lo, hi) = wilson_interval(k, n);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= hi && hi <= 1.0);
        let r = RateEstimate::from_counts(k, n);
        prop_assert!(r.contains(p));
        let (lo_c, hi_c) = wilson_interval(n - k, n);
        prop_assert!((lo - (1.0 - hi_c)).abs() < 1e-12);
        prop_assert!((hi - (1.0 - lo_c)).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ed1_rates_are_probabilities_decreasing_in_threshold(
        sir in -3.0f64..9.0,
        snr in 0.0f64..15.0,
        n in 1usize..200,
        t in 0.0f64..4000.0,
        dt in 1.0f64..500.0,
    ) {
        let s = scenario(sir, snr, n);
        let opts = AnalysisOptions::default();
        let pf = pf_ed1_closed(t, &s).unwrap().value;
        let pf2 = pf_ed1_closed(t + dt, &s).unwrap().value;
        let pd = pd_ed1(t, &s, &opts).unwrap().value;
        let pd2 = pd_ed1(t + dt, &s, &opts).unwrap().value;
        for v in [pf, pf2, pd, pd2] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(pf2 <= pf + 1e-12);
        prop_assert!(pd2 <= pd + 1e-9);
        // The interferer only adds energy.
        prop_assert!(pd >= pf - 1e-9);
    }

    #[test]
    fn ed2_linear_false_alarm_decreases_in_threshold(
        sir in 0.0f64..6.0,
        snr in 3.0f64..12.0,
        t2 in -300.0f64..300.0,
        dt in 5.0f64..100.0,
    ) {
        let s = scenario(sir, snr, 142);
        let opts = AnalysisOptions::default();
        let a = pf_ed2_linear(t2, &s, &opts).unwrap().value;
        let b = pf_ed2_linear(t2 + dt, &s, &opts).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(b <= a + 1e-9);
    }
}
