use statrs::function::factorial::ln_factorial;

use super::Tolerance;
use crate::{Error, Result};

/// Relative truncation level for each side of a Poisson split.
const POISSON_TAIL_EPS: f64 = 1e-18;

/// Both sides of a Poisson CDF split at an integer: `P(X < m)` and `P(X >= m)`
/// for `X ~ Poisson(u)`. Each side is accumulated from its own terms, so a
/// tiny tail keeps its relative accuracy instead of being `1 - (1 - tail)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonSplit {
    pub below: f64,
    pub at_or_above: f64,
}

fn ln_poisson_pmf(k: u64, mean: f64) -> f64 {
    if k == 0 {
        -mean
    } else {
        -mean + k as f64 * mean.ln() - ln_factorial(k)
    }
}

/// Unnormalized `[P(X < m), P(X >= m)]` for `u > 0`, accumulated outward
/// from the mode by recurrence. The pair shares the rounding error of the
/// mode term, so their ratio to their sum is accurate.
fn poisson_sums(m: u64, u: f64) -> [f64; 2] {
    let mode = u.floor() as u64;
    let p_mode = ln_poisson_pmf(mode, u).exp();
    // sums[0] = P(X < m), sums[1] = P(X >= m)
    let mut sums = [0.0f64; 2];
    let side = |k: u64| usize::from(k >= m);
    sums[side(mode)] += p_mode;

    let mut p = p_mode;
    let mut k = mode;
    while k > 0 {
        p *= k as f64 / u;
        k -= 1;
        sums[side(k)] += p;
        // Only terms below `m` remain once k <= m.
        let r = k as f64 / u;
        if p == 0.0 || (k <= m && p * r / (1.0 - r) < POISSON_TAIL_EPS * sums[0]) {
            break;
        }
    }

    let mut p = p_mode;
    let mut k = mode;
    loop {
        k += 1;
        p *= u / k as f64;
        sums[side(k)] += p;
        let r = u / (k + 1) as f64;
        if p == 0.0 || (k + 1 >= m && p * r / (1.0 - r) < POISSON_TAIL_EPS * sums[1]) {
            break;
        }
    }

    sums
}

/// Evaluates `P(X < m)` and `P(X >= m)` for `X ~ Poisson(u)`.
///
/// `P(X < m)` is the regularized upper incomplete gamma function `Q(m, u)` at
/// integer order, i.e. `exp(-u) * sum_{n<m} u^n / n!`.
pub fn poisson_split(m: u64, u: f64) -> PoissonSplit {
    if !(u > 0.0) {
        return if m == 0 {
            PoissonSplit { below: 0.0, at_or_above: 1.0 }
        } else {
            PoissonSplit { below: 1.0, at_or_above: 0.0 }
        };
    }
    if m == 0 {
        return PoissonSplit { below: 0.0, at_or_above: 1.0 };
    }

    // Chernoff: P(X <= k) <= exp(-u) (e u / k)^k for k < u, and the mirror
    // bound for the upper tail. Skip the summation when one side is
    // negligible in double precision.
    let mf = m as f64;
    let chernoff = |k: f64| -u + k + k * (u / k).ln();
    if mf < u && chernoff(mf) < -700.0 {
        return PoissonSplit { below: 0.0, at_or_above: 1.0 };
    }
    if mf > u && chernoff(mf) < -700.0 {
        return PoissonSplit { below: 1.0, at_or_above: 0.0 };
    }

    let sums = poisson_sums(m, u);
    let total = sums[0] + sums[1];
    PoissonSplit {
        below: (sums[0] / total).min(1.0),
        at_or_above: (sums[1] / total).min(1.0),
    }
}

/// `ln P(X >= m)` for `X ~ Poisson(u)`, accurate when the tail underflows.
///
/// For `u < m` the tail is `Pois(m; u) * (1 + u/(m+1) + u^2/((m+1)(m+2)) + ...)`
/// summed in the log domain; otherwise it is at least about one half and the
/// direct split is used.
pub fn ln_poisson_at_or_above(m: u64, u: f64) -> f64 {
    if m == 0 {
        return 0.0;
    }
    if !(u > 0.0) {
        return f64::NEG_INFINITY;
    }
    if u >= m as f64 {
        return poisson_split(m, u).at_or_above.ln();
    }
    let mut term = 1.0f64;
    let mut series = 1.0f64;
    let mut k = m;
    while term > 1e-17 * series {
        k += 1;
        term *= u / k as f64;
        series += term;
    }
    ln_poisson_pmf(m, u) + series.ln()
}

/// Survival function of a central chi-square with `2 * dof_half` degrees of
/// freedom: `exp(-t/2) * sum_{n<dof_half} (t/2)^n / n!`.
pub fn central_chi2_sf(dof_half: usize, t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t <= 0.0 {
        return 1.0;
    }
    poisson_split(dof_half as u64, t / 2.0).below
}

/// Generalized Marcum Q-function `Q_N(a, b)` for integer order `N >= 1`.
///
/// This is `P(X > b^2)` for `X` non-central chi-square with `2N` degrees of
/// freedom and non-centrality `a^2`, evaluated as the Poisson mixture
///
/// `sum_j Pois(j; a^2/2) * P(Pois(b^2/2) < N + j)`.
///
/// The sum starts at the Poisson mode and walks outward in both directions,
/// updating the incomplete-gamma factor by recurrence. Each direction stops
/// once the remaining Poisson mass (times the largest factor it can still be
/// multiplied by) is below `tol.abs_tol / 2`.
pub fn marcum_q(order: usize, a: f64, b: f64, tol: &Tolerance) -> Result<f64> {
    if order == 0 {
        return Err(Error::Argument("marcum_q order must be >= 1".into()));
    }
    if !a.is_finite() || !b.is_finite() || a < 0.0 || b < 0.0 {
        return Err(Error::Argument(format!(
            "marcum_q arguments must be finite and non-negative (a={a}, b={b})"
        )));
    }
    if b == 0.0 {
        return Ok(1.0);
    }
    let n = order as u64;
    let u = 0.5 * b * b;
    let mu = 0.5 * a * a;
    if mu == 0.0 {
        return Ok(poisson_split(n, u).below);
    }

    let half_tol = 0.5 * tol.abs_tol;
    let j0 = mu.floor() as u64;
    // The mixture weights below come from the same mode term and recurrences
    // as this total; dividing by it cancels the rounding of `exp(ln pmf)`,
    // which otherwise grows like `mu * ln(mu) * eps`.
    let weight_total: f64 = poisson_sums(j0, mu).iter().sum();
    let m0 = n + j0;
    let pivot = poisson_split(m0, u);
    let w0 = ln_poisson_pmf(j0, mu).exp();
    let mut sum = w0 * pivot.below;
    let mut terms = 1usize;

    let non_convergence = |sum: f64, terms: usize, bound: f64| Error::NonConvergence {
        op: "marcum_q",
        terms,
        partial: sum.clamp(0.0, 1.0),
        bound,
    };

    // Upward: S_{m+1} = S_m + t_m, with t_m = Pois(m; u).
    {
        let mut s = pivot.below;
        let mut t = ln_poisson_pmf(m0, u).exp();
        let mut w = w0;
        let mut j = j0;
        loop {
            s = (s + t).min(1.0);
            j += 1;
            t *= u / (n + j) as f64;
            w *= mu / j as f64;
            sum += w * s;
            terms += 1;
            let r = mu / (j + 1) as f64;
            let bound = if r < 1.0 { w * r / (1.0 - r) } else { f64::INFINITY };
            if bound <= half_tol || w == 0.0 && r < 1.0 {
                break;
            }
            if terms >= tol.max_terms {
                return Err(non_convergence(sum, terms, bound));
            }
        }
    }

    // Downward: S_{m-1} = S_m - t_{m-1}. Below one half the subtraction is
    // done on S directly; above, on the complement, so neither side cancels.
    {
        let mut s = pivot.below;
        let mut s_comp = pivot.at_or_above;
        let mut t_prev = ln_poisson_pmf(m0 - 1, u).exp();
        let mut w = w0;
        let mut j = j0;
        while j > 0 {
            let m = n + j;
            if s <= 0.5 {
                s = (s - t_prev).max(0.0);
                s_comp = 1.0 - s;
            } else {
                s_comp = (s_comp + t_prev).min(1.0);
                s = 1.0 - s_comp;
            }
            t_prev *= (m - 1) as f64 / u;
            w *= j as f64 / mu;
            j -= 1;
            sum += w * s;
            terms += 1;
            let r = j as f64 / mu;
            let bound = s * w * r / (1.0 - r);
            if bound <= half_tol {
                break;
            }
            if terms >= tol.max_terms {
                return Err(non_convergence(sum, terms, bound));
            }
        }
    }

    Ok((sum / weight_total).clamp(0.0, 1.0))
}

/// Inverts `Q_N(sqrt(lambda), sqrt(u)) = delta` for the threshold `u`.
///
/// `Q_N` is strictly decreasing in its second argument, so the root is
/// bracketed by growing an upper end geometrically from `2N + lambda` (the
/// mean of the statistic) and refined by bisection.
pub fn inv_marcum_q_threshold(order: usize, lambda: f64, delta: f64, tol: &Tolerance) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Argument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Argument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if order == 0 {
        return Err(Error::Argument("order must be >= 1".into()));
    }
    let a = lambda.sqrt();
    let q = |u: f64| marcum_q(order, a, u.sqrt(), tol);

    let mut lo = 0.0;
    let mut hi = 2.0 * order as f64 + lambda;
    let mut growths = 0;
    while q(hi)? >= delta {
        lo = hi;
        hi *= 2.0;
        growths += 1;
        if growths > 1000 || !hi.is_finite() {
            return Err(Error::Numerical {
                op: "inv_marcum_q_threshold",
                message: format!("bracket overflow while searching for delta={delta}"),
            });
        }
    }

    let mut mid = 0.5 * (lo + hi);
    for _ in 0..500 {
        mid = 0.5 * (lo + hi);
        let qm = q(mid)?;
        if (qm - delta).abs() <= tol.abs_tol || hi - lo <= tol.rel_tol * hi {
            return Ok(mid);
        }
        if qm > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct series `exp(-x) sum_{n<m} x^n/n!`, safe for moderate x.
    fn naive_upper_gamma(m: u64, x: f64) -> f64 {
        let mut term = (-x).exp();
        let mut sum = 0.0;
        for k in 0..m {
            if k > 0 {
                term *= x / k as f64;
            }
            sum += term;
        }
        sum
    }

    #[test]
    fn poisson_split_sums_to_one() {
        for &(m, u) in &[(1, 0.3), (5, 5.0), (142, 142.0), (300, 1000.0), (2000, 10.0)] {
            let s = poisson_split(m, u);
            assert!((s.below + s.at_or_above - 1.0).abs() < 1e-14, "m={m} u={u}");
        }
    }

    #[test]
    fn poisson_split_matches_naive_series() {
        for &(m, u) in &[(1, 1.0), (3, 0.5), (10, 7.5), (40, 30.0), (60, 80.0)] {
            let s = poisson_split(m, u);
            let naive = naive_upper_gamma(m, u);
            assert!((s.below - naive).abs() < 1e-13, "m={m} u={u}: {} vs {naive}", s.below);
        }
    }

    #[test]
    fn log_upper_tail_matches_split_and_survives_underflow() {
        for &(m, u) in &[(1, 0.3), (5, 2.0), (40, 30.0), (60, 80.0), (141, 140.0)] {
            let direct = poisson_split(m, u).at_or_above.ln();
            assert!((ln_poisson_at_or_above(m, u) - direct).abs() < 1e-11, "m={m} u={u}");
        }
        // P(X >= 141) for u = 1e-4 is Pois(141; u) to within a relative 1e-6.
        let lead = ln_poisson_pmf(141, 1e-4);
        assert!((ln_poisson_at_or_above(141, 1e-4) - lead).abs() < 1e-6);
        assert_eq!(ln_poisson_at_or_above(0, 3.0), 0.0);
        assert_eq!(ln_poisson_at_or_above(2, 0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn poisson_split_small_tail_keeps_relative_accuracy() {
        // P(Pois(200) < 100) in log space.
        let exact: f64 = (0..100u64)
            .map(|k| ln_poisson_pmf(k, 200.0))
            .map(f64::exp)
            .sum();
        let s = poisson_split(100, 200.0);
        assert!(((s.below - exact) / exact).abs() < 1e-10);
    }

    #[test]
    fn marcum_closed_forms() {
        let tol = Tolerance::default();
        for &(n, a) in &[(1, 0.0), (3, 2.0), (142, 30.0)] {
            assert_eq!(marcum_q(n, a, 0.0, &tol).unwrap(), 1.0);
        }
        let q = marcum_q(1, 0.0, 2.0, &tol).unwrap();
        assert!((q - (-2f64).exp()).abs() < 1e-15);
        let q = marcum_q(2, 0.0, 2f64.sqrt(), &tol).unwrap();
        assert!((q - 2.0 * (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn marcum_first_order_known_value() {
        // Q_1(a, b) for a = b = 1 via the Bessel series:
        // Q_1(a,b) = exp(-(a^2+b^2)/2) sum_{k>=0} (a/b)^k I_k(ab).
        // With a = b the k-sum of modified Bessel terms gives 0.5 + 0.5 e^{-1} I_0(1).
        let i0_of_1 = 1.266_065_877_752_008_4;
        let expected = 0.5 * (1.0 + (-1f64).exp() * i0_of_1);
        let q = marcum_q(1, 1.0, 1.0, &Tolerance::default()).unwrap();
        assert!((q - expected).abs() < 1e-10, "{q} vs {expected}");
    }

    #[test]
    fn central_chi2_examples() {
        assert!((central_chi2_sf(1, 2.0) - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(central_chi2_sf(10, 0.0), 1.0);
        let v = central_chi2_sf(142, 284.0);
        assert!(v > 0.4 && v < 0.6);
        // exp(-142) * sum_{n<142} 142^n / n! in log domain
        let oracle: f64 = (0..142u64)
            .map(|k| -142.0 + k as f64 * 142f64.ln() - ln_factorial(k))
            .map(f64::exp)
            .sum();
        assert!((v - oracle).abs() < 1e-13, "{v} vs {oracle}");
    }

    #[test]
    fn inverse_closed_form_and_roundtrip() {
        let tol = Tolerance::default();
        let t = inv_marcum_q_threshold(1, 0.0, (-2f64).exp(), &tol).unwrap();
        assert!((t - 4.0).abs() < 1e-7, "{t}");
        for &(n, lambda, delta) in &[(1, 0.0, 0.5), (4, 3.0, 0.01), (142, 1131.0, 0.05), (142, 0.0, 0.999)] {
            let t = inv_marcum_q_threshold(n, lambda, delta, &tol).unwrap();
            let q = marcum_q(n, lambda.sqrt(), t.sqrt(), &tol).unwrap();
            assert!((q - delta).abs() < 1e-8, "n={n} lambda={lambda}: {q} vs {delta}");
        }
    }

    #[test]
    fn inverse_rejects_bad_delta() {
        let tol = Tolerance::default();
        assert!(inv_marcum_q_threshold(2, 1.0, 0.0, &tol).is_err());
        assert!(inv_marcum_q_threshold(2, 1.0, 1.0, &tol).is_err());
    }

    #[test]
    fn non_convergence_reports_partial_value() {
        let tol = Tolerance::new(1e-10, 1e-12, 3).unwrap();
        match marcum_q(10, 40.0, 40.0, &tol) {
            Err(Error::NonConvergence { partial, bound, .. }) => {
                assert!((0.0..=1.0).contains(&partial));
                assert!(bound > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
