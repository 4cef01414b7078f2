//! Flat `key=value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored, except manifest
//! lines of the form `#: key=value`. An output file written by this tool
//! carries its resolved configuration in such lines, so it can be passed
//! back as `--config`: when a file contains any `#:` line, only those lines
//! are read and everything else (other comments, the CSV body) is skipped.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use inband_sense::analysis::{calibrate_threshold, AnalysisOptions};
use inband_sense::detectors::DetectorVariant;
use inband_sense::montecarlo::Estimation;
use inband_sense::scenario::{build_scenario, ModulationName, ModulationPolicy, ScenarioParams, SensingScenario};

use crate::error::{CliError, CliResult};

const MANIFEST_PREFIX: &str = "#:";

pub const DEFAULT_TRIALS: u64 = 10_000;
pub const DEFAULT_MPT_TRIALS: u64 = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimationMode {
    Ideal,
    Nmse,
}

impl EstimationMode {
    pub fn to_estimation(self) -> Estimation {
        match self {
            EstimationMode::Ideal => Estimation::Ideal,
            EstimationMode::Nmse => Estimation::NmseModel,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EstimationMode::Ideal => "ideal",
            EstimationMode::Nmse => "nmse",
        }
    }
}

/// Where the swept threshold parameters come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdGrid {
    List(Vec<f64>),
    Range { count: usize, min: f64, max: f64 },
    /// Parameters calibrated analytically to these false-alarm targets.
    PfTargets(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sir_db: f64,
    pub snr_db: f64,
    pub n_samples: usize,
    pub symbol_energy: f64,
    pub trials: Option<u64>,
    pub seed: u64,
    pub modulation: Option<ModulationPolicy>,
    pub detector: Option<DetectorVariant>,
    pub target_pf: Option<f64>,
    pub grid: Option<ThresholdGrid>,
    pub estimation: EstimationMode,
    /// Test hook: scales the noise variance seen by the analytic path only.
    pub analytic_sigma_n_scale: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sir_db: 0.0,
            snr_db: 6.0,
            n_samples: 142,
            symbol_energy: 1.0,
            trials: None,
            seed: 1,
            modulation: None,
            detector: None,
            target_pf: None,
            grid: None,
            estimation: EstimationMode::Ideal,
            analytic_sigma_n_scale: 1.0,
        }
    }
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}={value}: {why}"))
}

fn number<T: FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| bad(key, value, e))
}

fn number_list(key: &str, value: &str) -> CliResult<Vec<f64>> {
    let list = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| number::<f64>(key, s))
        .collect::<CliResult<Vec<_>>>()?;
    if list.is_empty() {
        return Err(bad(key, value, "empty list"));
    }
    Ok(list)
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let manifest = text.lines().any(|l| l.trim_start().starts_with(MANIFEST_PREFIX));
        let mut pairs = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let body = if let Some(rest) = line.strip_prefix(MANIFEST_PREFIX) {
                rest.trim()
            } else if manifest || line.is_empty() || line.starts_with('#') {
                continue;
            } else {
                line
            };
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1)))?;
            let key = key.trim().to_string();
            if pairs.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
        }
        Self::from_pairs(&pairs)
    }

    fn from_pairs(pairs: &BTreeMap<String, String>) -> CliResult<Self> {
        let mut cfg = RunConfig::default();
        let mut range = (None, None, None);
        for (key, value) in pairs {
            let v = value.as_str();
            match key.as_str() {
                "sir_db" => cfg.sir_db = number(key, v)?,
                "snr_db" => cfg.snr_db = number(key, v)?,
                "n_samples" => cfg.n_samples = number(key, v)?,
                "symbol_energy" => cfg.symbol_energy = number(key, v)?,
                "trials" => cfg.trials = Some(number(key, v)?),
                "seed" => cfg.seed = number(key, v)?,
                "modulation" => cfg.modulation = Some(v.parse().map_err(|e| bad(key, v, e))?),
                "detector" => cfg.detector = Some(v.parse().map_err(|e| bad(key, v, e))?),
                "target_pf" => cfg.target_pf = Some(number(key, v)?),
                "thresholds" => cfg.set_grid(ThresholdGrid::List(number_list(key, v)?))?,
                "pf_targets" => cfg.set_grid(ThresholdGrid::PfTargets(number_list(key, v)?))?,
                "threshold_count" => range.0 = Some(number::<usize>(key, v)?),
                "threshold_min" => range.1 = Some(number::<f64>(key, v)?),
                "threshold_max" => range.2 = Some(number::<f64>(key, v)?),
                "estimation" | "nmse_mode" => {
                    cfg.estimation = match v.to_ascii_lowercase().as_str() {
                        "ideal" => EstimationMode::Ideal,
                        "nmse" | "nmse-model" | "nmse_model" => EstimationMode::Nmse,
                        _ => return Err(bad(key, v, "expected ideal or nmse")),
                    }
                }
                "test_analytic_sigma_n_scale" => cfg.analytic_sigma_n_scale = number(key, v)?,
                _ => return Err(CliError::Config(format!("unknown key '{key}'"))),
            }
        }
        match range {
            (None, None, None) => {}
            (Some(count), Some(min), Some(max)) => {
                if count == 0 {
                    return Err(CliError::Config("threshold_count must be >= 1".into()));
                }
                if !(min <= max) {
                    return Err(CliError::Config(format!("threshold_min {min} exceeds threshold_max {max}")));
                }
                cfg.set_grid(ThresholdGrid::Range { count, min, max })?
            }
            _ => {
                return Err(CliError::Config(
                    "threshold_count, threshold_min and threshold_max must be given together".into(),
                ))
            }
        }
        if !(cfg.analytic_sigma_n_scale > 0.0) || !cfg.analytic_sigma_n_scale.is_finite() {
            return Err(CliError::Config("test_analytic_sigma_n_scale must be finite and > 0".into()));
        }
        Ok(cfg)
    }

    fn set_grid(&mut self, grid: ThresholdGrid) -> CliResult<()> {
        if self.grid.is_some() {
            return Err(CliError::Config(
                "give only one of thresholds, pf_targets, or threshold_count/min/max".into(),
            ));
        }
        self.grid = Some(grid);
        Ok(())
    }

    pub fn require_detector(&self) -> CliResult<DetectorVariant> {
        self.detector
            .ok_or_else(|| CliError::Config("missing key 'detector'".into()))
    }

    /// Explicit modulation, else uniform over formats for the MPT and QAM4
    /// for the energy detectors.
    pub fn modulation_for(&self, variant: Option<DetectorVariant>) -> ModulationPolicy {
        self.modulation.unwrap_or(match variant {
            Some(DetectorVariant::Mpt) => ModulationPolicy::UniformOverFormats,
            _ => ModulationPolicy::Fixed(ModulationName::Qam4),
        })
    }

    pub fn trials_for(&self, variant: Option<DetectorVariant>) -> u64 {
        self.trials.unwrap_or(match variant {
            Some(DetectorVariant::Mpt) => DEFAULT_MPT_TRIALS,
            _ => DEFAULT_TRIALS,
        })
    }

    pub fn scenario(&self, variant: Option<DetectorVariant>) -> CliResult<SensingScenario> {
        Ok(build_scenario(&ScenarioParams {
            sir_db: self.sir_db,
            snr_db: self.snr_db,
            n_samples: self.n_samples,
            symbol_energy: self.symbol_energy,
            modulation_policy: self.modulation_for(variant),
        })?)
    }

    /// The scenario handed to the analytic path (differs only under the
    /// noise-scale test hook).
    pub fn analytic_scenario(&self, variant: Option<DetectorVariant>) -> CliResult<SensingScenario> {
        let s = self.scenario(variant)?;
        if self.analytic_sigma_n_scale == 1.0 {
            return Ok(s);
        }
        Ok(s.with_sigma_n_sq(s.sigma_n_sq() * self.analytic_sigma_n_scale)?)
    }

    /// Resolves the threshold grid to explicit parameters. Without a grid,
    /// a single point calibrated to `target_pf` is used.
    pub fn thresholds(&self, variant: DetectorVariant, opts: &AnalysisOptions) -> CliResult<Vec<f64>> {
        let grid = match (&self.grid, self.target_pf) {
            (Some(g), _) => g.clone(),
            (None, Some(t)) => ThresholdGrid::PfTargets(vec![t]),
            (None, None) => {
                return Err(CliError::Config(
                    "no thresholds: give thresholds, pf_targets, threshold_count/min/max, or target_pf".into(),
                ))
            }
        };
        Ok(match grid {
            ThresholdGrid::List(v) => v,
            ThresholdGrid::Range { count: 1, min, .. } => vec![min],
            ThresholdGrid::Range { count, min, max } => (0..count)
                .map(|i| min + (max - min) * i as f64 / (count - 1) as f64)
                .collect(),
            ThresholdGrid::PfTargets(targets) => {
                let scenario = self.analytic_scenario(Some(variant))?;
                targets
                    .iter()
                    .map(|&t| calibrate_threshold(variant, t, &scenario, opts).map_err(CliError::from))
                    .collect::<CliResult<Vec<_>>>()?
            }
        })
    }

    /// `key=value` lines that reproduce this run with `thresholds` resolved.
    pub fn resolved_pairs(&self, variant: Option<DetectorVariant>, thresholds: Option<&[f64]>) -> Vec<(String, String)> {
        let mut out = vec![
            ("sir_db".to_string(), self.sir_db.to_string()),
            ("snr_db".to_string(), self.snr_db.to_string()),
            ("n_samples".to_string(), self.n_samples.to_string()),
            ("symbol_energy".to_string(), self.symbol_energy.to_string()),
            ("modulation".to_string(), self.modulation_for(variant).to_string()),
            ("trials".to_string(), self.trials_for(variant).to_string()),
            ("seed".to_string(), self.seed.to_string()),
            ("estimation".to_string(), self.estimation.as_str().to_string()),
        ];
        if let Some(v) = variant {
            out.push(("detector".to_string(), v.to_string()));
        }
        if let Some(t) = thresholds {
            let list: Vec<String> = t.iter().map(f64::to_string).collect();
            out.push(("thresholds".to_string(), list.join(",")));
        }
        if self.analytic_sigma_n_scale != 1.0 {
            out.push((
                "test_analytic_sigma_n_scale".to_string(),
                self.analytic_sigma_n_scale.to_string(),
            ));
        }
        out
    }
}
