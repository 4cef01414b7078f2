//! Statistical model of in-band sensing on one resource block.
//!
//! After the FFT each usable resource element `i` of the block carries
//!
//! ```text
//! H0  : y_i = n_i
//! H1  : y_i = h2 x2_i + n_i
//! H1' : y_i = h1 x1_i + n_i
//! H2  : y_i = h1 x1_i + h2 x2_i + n_i
//! ```
//!
//! with flat Rayleigh channels `h1 ~ CN(0, s1)`, `h2 ~ CN(0, s2)` that stay
//! constant over the block, i.i.d. symbols of energy `Ex`, and noise
//! `n_i ~ CN(0, sn)`. `H0`/`H1` is the vacant-resource test, `H1'`/`H2` the
//! in-band test this crate is mostly about.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModulationName {
    Qam4,
    Qam16,
    Qam64,
}

impl ModulationName {
    pub const ALL: [ModulationName; 3] = [ModulationName::Qam4, ModulationName::Qam16, ModulationName::Qam64];

    /// Points per axis of the square constellation.
    fn side(self) -> usize {
        match self {
            ModulationName::Qam4 => 2,
            ModulationName::Qam16 => 4,
            ModulationName::Qam64 => 8,
        }
    }

    /// The shared unit-energy alphabet for this format.
    pub fn alphabet(self) -> &'static ModulationAlphabet {
        static TABLE: OnceLock<[ModulationAlphabet; 3]> = OnceLock::new();
        let table = TABLE.get_or_init(|| ModulationName::ALL.map(ModulationAlphabet::square_qam));
        &table[self as usize]
    }
}

impl fmt::Display for ModulationName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModulationName::Qam4 => "qam4",
            ModulationName::Qam16 => "qam16",
            ModulationName::Qam64 => "qam64",
        })
    }
}

impl FromStr for ModulationName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qam4" | "4qam" | "qpsk" => Ok(ModulationName::Qam4),
            "qam16" | "16qam" => Ok(ModulationName::Qam16),
            "qam64" | "64qam" => Ok(ModulationName::Qam64),
            other => Err(Error::validation("modulation", format!("unknown format '{other}'"))),
        }
    }
}

/// A set of equiprobable constellation points.
///
/// Square QAM alphabets are unit-energy and symmetric under negation; they
/// also remember their per-axis levels, which lets likelihood evaluation
/// factor the in-phase and quadrature sums.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationAlphabet {
    name: Option<ModulationName>,
    points: Vec<Complex64>,
    axis_levels: Option<Vec<f64>>,
}

impl ModulationAlphabet {
    fn square_qam(name: ModulationName) -> Self {
        let side = name.side();
        // Odd-integer PAM levels have mean square (side^2 - 1) / 3 per axis.
        let scale = (2.0 * ((side * side - 1) as f64) / 3.0).sqrt().recip();
        let levels: Vec<f64> = (0..side)
            .map(|k| (2.0 * k as f64 - (side as f64 - 1.0)) * scale)
            .collect();
        let points = levels
            .iter()
            .flat_map(|&re| levels.iter().map(move |&im| Complex64::new(re, im)))
            .collect();
        Self {
            name: Some(name),
            points,
            axis_levels: Some(levels),
        }
    }

    /// An arbitrary alphabet. No energy normalization is applied.
    pub fn from_points(points: Vec<Complex64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::validation("points", "alphabet must not be empty"));
        }
        if points.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
            return Err(Error::validation("points", "alphabet points must be finite"));
        }
        Ok(Self {
            name: None,
            points,
            axis_levels: None,
        })
    }

    pub fn name(&self) -> Option<ModulationName> {
        self.name
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Per-axis levels when the alphabet is a full square grid
    /// `{a + jb : a, b in levels}`.
    pub fn axis_levels(&self) -> Option<&[f64]> {
        self.axis_levels.as_deref()
    }

    pub fn mean_power(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }
}

/// How each transmitter picks its modulation format for a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModulationPolicy {
    Fixed(ModulationName),
    /// One of QAM4/16/64 uniformly at random, drawn once per block and
    /// transmitter.
    UniformOverFormats,
}

impl ModulationPolicy {
    /// Formats a block can carry under this policy, i.e. the mixture a
    /// likelihood detector has to average over.
    pub fn formats(&self) -> Vec<ModulationName> {
        match self {
            ModulationPolicy::Fixed(name) => vec![*name],
            ModulationPolicy::UniformOverFormats => ModulationName::ALL.to_vec(),
        }
    }

    pub fn alphabets(&self) -> Vec<&'static ModulationAlphabet> {
        self.formats().into_iter().map(ModulationName::alphabet).collect()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ModulationName {
        match self {
            ModulationPolicy::Fixed(name) => *name,
            ModulationPolicy::UniformOverFormats => ModulationName::ALL[rng.random_range(0..3)],
        }
    }
}

impl fmt::Display for ModulationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModulationPolicy::Fixed(name) => write!(f, "{name}"),
            ModulationPolicy::UniformOverFormats => f.write_str("uniform"),
        }
    }
}

impl FromStr for ModulationPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" | "uniform-over-formats" => Ok(ModulationPolicy::UniformOverFormats),
            other => other.parse().map(ModulationPolicy::Fixed),
        }
    }
}

/// All model parameters, in linear units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingScenario {
    sigma1_sq: f64,
    sigma2_sq: f64,
    sigma_n_sq: f64,
    symbol_energy: f64,
    n_samples: usize,
    modulation_policy: ModulationPolicy,
}

fn positive(field: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::validation(field, format!("must be finite and > 0, got {v}")))
    }
}

impl SensingScenario {
    pub fn new(
        sigma1_sq: f64,
        sigma2_sq: f64,
        sigma_n_sq: f64,
        symbol_energy: f64,
        n_samples: usize,
        modulation_policy: ModulationPolicy,
    ) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::validation("n_samples", "must be >= 1"));
        }
        Ok(Self {
            sigma1_sq: positive("sigma1_sq", sigma1_sq)?,
            sigma2_sq: positive("sigma2_sq", sigma2_sq)?,
            sigma_n_sq: positive("sigma_n_sq", sigma_n_sq)?,
            symbol_energy: positive("symbol_energy", symbol_energy)?,
            n_samples,
            modulation_policy,
        })
    }

    pub fn sigma1_sq(&self) -> f64 {
        self.sigma1_sq
    }
    pub fn sigma2_sq(&self) -> f64 {
        self.sigma2_sq
    }
    pub fn sigma_n_sq(&self) -> f64 {
        self.sigma_n_sq
    }
    pub fn symbol_energy(&self) -> f64 {
        self.symbol_energy
    }
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }
    pub fn modulation_policy(&self) -> ModulationPolicy {
        self.modulation_policy
    }

    /// `s1 / s2`
    pub fn sir(&self) -> f64 {
        self.sigma1_sq / self.sigma2_sq
    }

    /// `s1 / sn`
    pub fn snr(&self) -> f64 {
        self.sigma1_sq / self.sigma_n_sq
    }

    /// Non-centrality of the energy statistic per unit channel power,
    /// `2 N Ex / sn`. Multiply by `|h|^2` to get `lambda`.
    pub fn noncentrality_per_power(&self) -> f64 {
        2.0 * self.n_samples as f64 * self.symbol_energy / self.sigma_n_sq
    }

    pub fn with_n_samples(&self, n_samples: usize) -> Result<Self> {
        Self::new(
            self.sigma1_sq,
            self.sigma2_sq,
            self.sigma_n_sq,
            self.symbol_energy,
            n_samples,
            self.modulation_policy,
        )
    }

    pub fn with_sigma_n_sq(&self, sigma_n_sq: f64) -> Result<Self> {
        Self::new(
            self.sigma1_sq,
            self.sigma2_sq,
            sigma_n_sq,
            self.symbol_energy,
            self.n_samples,
            self.modulation_policy,
        )
    }

    pub fn with_modulation_policy(&self, modulation_policy: ModulationPolicy) -> Self {
        Self {
            modulation_policy,
            ..*self
        }
    }
}

/// Scenario parameters as they appear in experiment descriptions, with the
/// serving-channel variance normalized to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub sir_db: f64,
    pub snr_db: f64,
    pub n_samples: usize,
    pub symbol_energy: f64,
    pub modulation_policy: ModulationPolicy,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            sir_db: 0.0,
            snr_db: 6.0,
            n_samples: 142,
            symbol_energy: 1.0,
            modulation_policy: ModulationPolicy::Fixed(ModulationName::Qam4),
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Converts dB ratios to variances with `s1 = 1` and validates the result.
pub fn build_scenario(params: &ScenarioParams) -> Result<SensingScenario> {
    if !params.sir_db.is_finite() {
        return Err(Error::validation("sir_db", "must be finite"));
    }
    if !params.snr_db.is_finite() {
        return Err(Error::validation("snr_db", "must be finite"));
    }
    let sigma1_sq = 1.0;
    SensingScenario::new(
        sigma1_sq,
        sigma1_sq / db_to_linear(params.sir_db),
        sigma1_sq / db_to_linear(params.snr_db),
        params.symbol_energy,
        params.n_samples,
        params.modulation_policy,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    /// Noise only.
    H0,
    /// Interferer plus noise.
    H1,
    /// Serving signal plus noise.
    H1Prime,
    /// Serving signal, interferer and noise.
    H2,
}

impl Hypothesis {
    pub fn serving_active(self) -> bool {
        matches!(self, Hypothesis::H1Prime | Hypothesis::H2)
    }

    pub fn interferer_active(self) -> bool {
        matches!(self, Hypothesis::H1 | Hypothesis::H2)
    }
}

/// One Rayleigh realization of both channels, plus the serving-channel value
/// that channel-aware detectors are allowed to see.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingDraw {
    pub h1: Complex64,
    pub h2: Complex64,
    pub h1_est: Complex64,
}

/// Formats actually transmitted in a block (`None` for a silent transmitter).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FormatsUsed {
    pub serving: Option<ModulationName>,
    pub interferer: Option<ModulationName>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBlock {
    pub samples: Vec<Complex64>,
    pub truth: Hypothesis,
    pub fading: FadingDraw,
    pub formats_used: FormatsUsed,
}

/// A circularly-symmetric complex Gaussian draw with `E|z|^2 = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> Complex64 {
    let sd = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(sd * re, sd * im)
}

pub fn draw_fading<R: Rng + ?Sized>(scenario: &SensingScenario, rng: &mut R) -> FadingDraw {
    let h1 = complex_gaussian(scenario.sigma1_sq, rng);
    let h2 = complex_gaussian(scenario.sigma2_sq, rng);
    FadingDraw { h1, h2, h1_est: h1 }
}

/// `n` i.i.d. uniform draws from the (unit-energy) alphabet.
pub fn draw_symbols<R: Rng + ?Sized>(alphabet: &ModulationAlphabet, n: usize, rng: &mut R) -> Vec<Complex64> {
    (0..n)
        .map(|_| alphabet.points[rng.random_range(0..alphabet.points.len())])
        .collect()
}

/// Draws one block under `truth` for the given channels.
///
/// Formats are drawn once per block and transmitter, then symbols and noise
/// per resource element. Symbols are scaled by `sqrt(Ex)`.
pub fn synthesize_block<R: Rng + ?Sized>(
    scenario: &SensingScenario,
    fading: &FadingDraw,
    truth: Hypothesis,
    rng: &mut R,
) -> ObservationBlock {
    let policy = scenario.modulation_policy;
    let formats_used = FormatsUsed {
        serving: truth.serving_active().then(|| policy.draw(rng)),
        interferer: truth.interferer_active().then(|| policy.draw(rng)),
    };
    let amp = scenario.symbol_energy.sqrt();
    let g1 = fading.h1 * amp;
    let g2 = fading.h2 * amp;
    let serving = formats_used.serving.map(|f| f.alphabet().points());
    let interferer = formats_used.interferer.map(|f| f.alphabet().points());

    let samples = (0..scenario.n_samples)
        .map(|_| {
            let mut y = Complex64::new(0.0, 0.0);
            if let Some(points) = serving {
                y += g1 * points[rng.random_range(0..points.len())];
            }
            if let Some(points) = interferer {
                y += g2 * points[rng.random_range(0..points.len())];
            }
            y + complex_gaussian(scenario.sigma_n_sq, rng)
        })
        .collect();

    ObservationBlock {
        samples,
        truth,
        fading: *fading,
        formats_used,
    }
}

/// Lower and upper SINR (dB) of the channel-estimation error fit.
pub const NMSE_FIT_RANGE_DB: (f64, f64) = (0.0, 30.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmseEstimate {
    pub nmse: f64,
    /// Set when the requested SINR lay outside the fit range and was clamped.
    pub clamped: bool,
}

/// Normalized MSE of the LS channel estimator,
/// `log10(nmse) = -SINR_dB / 10 - 0.26`, valid for SINR in 0..30 dB.
pub fn nmse_from_sinr(sinr_db: f64) -> NmseEstimate {
    let (lo, hi) = NMSE_FIT_RANGE_DB;
    let clamped_db = sinr_db.clamp(lo, hi);
    NmseEstimate {
        nmse: 10f64.powf(-clamped_db / 10.0 - 0.26),
        clamped: clamped_db != sinr_db,
    }
}

/// SINR seen by the serving-cell reference signals under hypothesis `truth`:
/// the interferer counts as noise whenever it is present.
pub fn estimation_sinr_db(scenario: &SensingScenario, truth: Hypothesis) -> f64 {
    let impairment = if truth.interferer_active() {
        scenario.sigma2_sq + scenario.sigma_n_sq
    } else {
        scenario.sigma_n_sq
    };
    linear_to_db(scenario.sigma1_sq / impairment)
}

/// Returns a copy of `fading` whose `h1_est` is `h1 + e`,
/// `e ~ CN(0, nmse * s1)`. `h1` and `h2` are never touched.
pub fn corrupt_channel_estimate<R: Rng + ?Sized>(
    fading: &FadingDraw,
    nmse: f64,
    sigma1_sq: f64,
    rng: &mut R,
) -> FadingDraw {
    if nmse == 0.0 {
        return FadingDraw {
            h1_est: fading.h1,
            ..*fading
        };
    }
    FadingDraw {
        h1_est: fading.h1 + complex_gaussian(nmse * sigma1_sq, rng),
        ..*fading
    }
}
