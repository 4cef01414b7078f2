//! Special functions behind the analytic error rates.
//!
//! Everything here is pure and reentrant. The Marcum Q-function is evaluated
//! through its Poisson-mixture representation, which stays well conditioned
//! for the large orders (`N` in the low hundreds) and large non-centralities
//! that resource-block sensing produces.

mod marcum;
mod quadrature;

pub use marcum::{
    central_chi2_sf, inv_marcum_q_threshold, ln_poisson_at_or_above, marcum_q, poisson_split, PoissonSplit,
};
pub use quadrature::{
    rayleigh_expectation, try_rayleigh_expectation, AdaptiveTruncated, GaussLaguerre, Integral,
    QuadratureKind, QuadratureRule,
};

use crate::{Error, Result};

/// Series and root-finding tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_terms: usize,
}

impl Tolerance {
    pub fn new(abs_tol: f64, rel_tol: f64, max_terms: usize) -> Result<Self> {
        if !(abs_tol > 0.0) || !abs_tol.is_finite() {
            return Err(Error::validation("abs_tol", "must be finite and > 0"));
        }
        if !(rel_tol > 0.0) || !rel_tol.is_finite() {
            return Err(Error::validation("rel_tol", "must be finite and > 0"));
        }
        if max_terms == 0 {
            return Err(Error::validation("max_terms", "must be >= 1"));
        }
        Ok(Self {
            abs_tol,
            rel_tol,
            max_terms,
        })
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_terms: 1_000_000,
        }
    }
}

/// `log(sum(exp(v)))` with a max shift.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    let max = values
        .iter()
        .copied()
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |m| m.max(v))))
        .ok_or_else(|| Error::Argument("log_sum_exp of an empty sequence".into()))?;
    Ok(log_sum_exp_shifted(values.iter().copied(), max))
}

/// Log-sum-exp over an iterator when the maximum is already known.
pub(crate) fn log_sum_exp_shifted(values: impl IntoIterator<Item = f64>, max: f64) -> f64 {
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.into_iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Running log-sum-exp accumulator, used where materializing the terms would
/// cost an allocation per sample.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl LogSumExp {
    pub(crate) fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, v: f64) {
        if v <= self.max {
            self.scaled += (v - self.max).exp();
        } else if v.is_finite() {
            self.scaled = self.scaled * (self.max - v).exp() + 1.0;
            self.max = v;
        } else if v == f64::INFINITY {
            self.max = v;
            self.scaled = 1.0;
        }
    }

    pub(crate) fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY || self.max == f64::INFINITY {
            self.max
        } else {
            self.max + self.scaled.ln()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_examples() {
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        let v = log_sum_exp(&[-1000.0, -1000.0]).unwrap();
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[3.25]).unwrap(), 3.25);
        assert!(matches!(log_sum_exp(&[]), Err(Error::Argument(_))));
    }

    #[test]
    fn log_sum_exp_wide_spread() {
        let v = log_sum_exp(&[0.0, 700.0]).unwrap();
        assert!((v - 700.0).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn running_accumulator_matches_batch() {
        let values = [-3.0, 12.5, -700.0, 4.0, 12.5, 0.0];
        let mut acc = LogSumExp::new();
        values.iter().for_each(|&v| acc.push(v));
        assert!((acc.value() - log_sum_exp(&values).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn tolerance_validation() {
        assert!(Tolerance::new(0.0, 1e-3, 10).is_err());
        assert!(Tolerance::new(1e-3, 1e-3, 0).is_err());
        assert!(Tolerance::new(1e-3, 1e-3, 1).is_ok());
    }
}
