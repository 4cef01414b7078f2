//! In-band ("Type 2") spectrum sensing for an OFDM resource-block model.
//!
//! A user equipment receiving its serving cell on a resource block wants to
//! know whether a second cell is transmitting underneath. This crate provides
//! the statistical model of that problem, the candidate decision rules (energy
//! detectors with and without serving-channel knowledge, and the genie-aided
//! likelihood-ratio test), analytic false-alarm and detection probabilities
//! for the energy detectors, and a reproducible Monte-Carlo engine that
//! produces empirical ROC curves with confidence intervals.
//!
//! Module map:
//!
//! - [`scenario`]: model parameters, fading draws and block synthesis
//! - [`specfun`]: generalized Marcum Q-function, its inverse, quadrature
//! - [`detectors`]: decision rules and their thresholds
//! - [`analysis`]: analytic `Pf`/`Pd` and threshold calibration
//! - [`montecarlo`]: trial engine, ROC sweeps, estimation-error study

pub mod analysis;
pub mod detectors;
mod error;
pub mod montecarlo;
pub mod scenario;
pub mod specfun;
pub mod streams;

pub use error::{Error, Result};
pub use num_complex::Complex64;
