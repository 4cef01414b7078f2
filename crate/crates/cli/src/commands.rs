use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use inband_sense::analysis::{analytic_rates, calibrate_threshold, AnalysisOptions};
use inband_sense::detectors::{DetectorConfig, DetectorVariant};
use inband_sense::montecarlo::{analytic_roc, roc_sweep, score_trials, RateEstimate, RocCurve, TrialPlan};
use inband_sense::scenario::SensingScenario;
use inband_sense::specfun::{central_chi2_sf, inv_marcum_q_threshold, marcum_q};

use crate::config::{EstimationMode, RunConfig};
use crate::error::{CliError, CliResult};

pub const ROC_HEADER: [&str; 9] = [
    "threshold",
    "pf_analytic",
    "pd_analytic",
    "pf_mc",
    "pf_ci_low",
    "pf_ci_high",
    "pd_mc",
    "pd_ci_low",
    "pd_ci_high",
];

pub const VALIDATE_EXTRA: [&str; 3] = ["pf_pass", "pd_pass", "pass"];

/// Share of rows that must agree for `validate` to succeed.
pub const VALIDATE_PASS_FRACTION: f64 = 0.9;

struct Row {
    threshold: f64,
    pf_analytic: Option<f64>,
    pd_analytic: Option<f64>,
    pf: RateEstimate,
    pd: RateEstimate,
}

impl Row {
    fn pf_pass(&self) -> bool {
        self.pf_analytic.is_some_and(|p| self.pf.contains(p))
    }

    fn pd_pass(&self) -> bool {
        self.pd_analytic.is_some_and(|p| self.pd.contains(p))
    }

    fn fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.threshold.to_string(),
            opt(self.pf_analytic),
            opt(self.pd_analytic),
            self.pf.p_hat.to_string(),
            self.pf.ci_low.to_string(),
            self.pf.ci_high.to_string(),
            self.pd.p_hat.to_string(),
            self.pd.ci_low.to_string(),
            self.pd.ci_high.to_string(),
        ]
    }
}

struct Experiment {
    cfg: RunConfig,
    variant: DetectorVariant,
    scenario: SensingScenario,
    thresholds: Vec<f64>,
    rows: Vec<Row>,
}

fn run_experiment(config: &Path) -> CliResult<Experiment> {
    let cfg = RunConfig::load(config)?;
    let variant = cfg.require_detector()?;
    let opts = AnalysisOptions::default();
    let thresholds = cfg.thresholds(variant, &opts)?;
    let scenario = cfg.scenario(Some(variant))?;
    let detector = DetectorConfig::new(variant, thresholds[0])?;
    let plan = TrialPlan::new(scenario, detector, cfg.trials_for(Some(variant)), cfg.seed)?
        .with_estimation(cfg.estimation.to_estimation())?;
    let mc = roc_sweep(&plan, &thresholds, None)?;

    // The analytic rates assume a perfectly known serving channel.
    let analytic: Option<RocCurve> = if variant != DetectorVariant::Mpt && cfg.estimation == EstimationMode::Ideal {
        Some(analytic_roc(variant, &thresholds, &cfg.analytic_scenario(Some(variant))?, &opts)?)
    } else {
        None
    };

    let rows = mc
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let a = analytic.as_ref().map(|c| &c.points[i]);
            Row {
                threshold: p.threshold_param,
                pf_analytic: a.and_then(|a| a.pf_analytic).map(|r| r.value),
                pd_analytic: a.and_then(|a| a.pd_analytic).map(|r| r.value),
                pf: p.pf_mc.expect("simulated curve"),
                pd: p.pd_mc.expect("simulated curve"),
            }
        })
        .collect();
    Ok(Experiment {
        cfg,
        variant,
        scenario,
        thresholds,
        rows,
    })
}

fn manifest_lines(command: &str, exp: &Experiment, started: Instant) -> Vec<String> {
    let mut lines = vec![
        "# tool=inband-sense".to_string(),
        format!("# version={}", env!("CARGO_PKG_VERSION")),
        format!("# command={command}"),
    ];
    lines.extend(
        exp.cfg
            .resolved_pairs(Some(exp.variant), Some(&exp.thresholds))
            .into_iter()
            .map(|(k, v)| format!("#: {k}={v}")),
    );
    let s = &exp.scenario;
    lines.push(format!("# sigma1_sq={}", s.sigma1_sq()));
    lines.push(format!("# sigma2_sq={}", s.sigma2_sq()));
    lines.push(format!("# sigma_n_sq={}", s.sigma_n_sq()));
    lines.push(format!("# duration_s={}", started.elapsed().as_secs_f64()));
    lines
}

fn write_table(path: &Path, manifest: &[String], header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let shown = path.display().to_string();
    let io = |e: std::io::Error| CliError::io(shown.clone(), e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for line in manifest {
        writeln!(out, "{line}").map_err(io)?;
    }
    let mut csv = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::io(shown.clone(), e.into());
    csv.write_record(header).map_err(csv_err)?;
    for row in rows {
        csv.write_record(row).map_err(csv_err)?;
    }
    csv.flush().map_err(io)
}

pub fn cmd_roc(config: &Path, output: &Path) -> CliResult<()> {
    let started = Instant::now();
    let exp = run_experiment(config)?;
    let rows: Vec<Vec<String>> = exp.rows.iter().map(Row::fields).collect();
    write_table(output, &manifest_lines("roc", &exp, started), &ROC_HEADER, &rows)
}

/// Writes the analytic-vs-simulated table and succeeds iff at least
/// [`VALIDATE_PASS_FRACTION`] of rows have both analytic rates inside the
/// simulated 95% intervals.
pub fn cmd_validate(config: &Path, output: &Path, stdout: &mut dyn Write) -> CliResult<()> {
    let started = Instant::now();
    let exp = run_experiment(config)?;
    if !matches!(exp.variant, DetectorVariant::Ed1 | DetectorVariant::Ed2Linear) {
        return Err(CliError::Config(format!(
            "validate supports ed1 and ed2_linear, got {}",
            exp.variant
        )));
    }
    if exp.cfg.estimation != EstimationMode::Ideal {
        return Err(CliError::Config("validate needs estimation=ideal".into()));
    }
    let flag = |b: bool| if b { "1".to_string() } else { "0".to_string() };
    let rows: Vec<Vec<String>> = exp
        .rows
        .iter()
        .map(|r| {
            let mut f = r.fields();
            f.extend([flag(r.pf_pass()), flag(r.pd_pass()), flag(r.pf_pass() && r.pd_pass())]);
            f
        })
        .collect();
    let header: Vec<&str> = ROC_HEADER.iter().chain(&VALIDATE_EXTRA).copied().collect();
    write_table(output, &manifest_lines("validate", &exp, started), &header, &rows)?;

    let passed = exp.rows.iter().filter(|r| r.pf_pass() && r.pd_pass()).count();
    let total = exp.rows.len();
    let ok = passed as f64 >= VALIDATE_PASS_FRACTION * total as f64;
    let shown = output.display().to_string();
    writeln!(stdout, "rows={total}\npassed={passed}\nresult={}", if ok { "pass" } else { "fail" })
        .map_err(|e| CliError::io(shown, e))?;
    if ok {
        Ok(())
    } else {
        Err(CliError::ValidationFailed { passed, rows: total })
    }
}

/// Prints the threshold parameter hitting `target_pf` and the rate achieved.
/// The MPT has no analytic false-alarm rate and is calibrated on simulated
/// null scores instead.
pub fn cmd_calibrate(
    variant: DetectorVariant,
    target_pf: f64,
    config: Option<&Path>,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    if !(target_pf > 0.0 && target_pf < 1.0) {
        return Err(CliError::Config(format!("target_pf must lie in (0, 1), got {target_pf}")));
    }
    let cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut lines = vec![format!("detector={variant}"), format!("target_pf={target_pf}")];
    if variant == DetectorVariant::Mpt {
        let scenario = cfg.scenario(Some(variant))?;
        let detector = DetectorConfig::new(variant, 0.0)?;
        let plan = TrialPlan::new(scenario, detector, cfg.trials_for(Some(variant)), cfg.seed)?
            .with_estimation(cfg.estimation.to_estimation())?;
        let op = score_trials(&plan)?.operating_point(target_pf)?;
        lines.push(format!("{}={}", variant.parameter_name(), op.cut));
        lines.push(format!("pf_mc={}", op.pf.p_hat));
        lines.push(format!("pd_mc={}", op.pd.p_hat));
    } else {
        let opts = AnalysisOptions::default();
        let scenario = cfg.analytic_scenario(Some(variant))?;
        let param = calibrate_threshold(variant, target_pf, &scenario, &opts)?;
        let (pf, _) = analytic_rates(variant, param, &scenario, &opts)?.expect("analytic detector");
        lines.push(format!("{}={param}", variant.parameter_name()));
        lines.push(format!("pf_analytic={}", pf.value));
    }
    let text = lines.join("\n") + "\n";
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::io("stdout", e))
}

fn arg<T: std::str::FromStr>(name: &str, args: &[String], i: usize, what: &str) -> CliResult<T> {
    let raw = args
        .get(i)
        .ok_or_else(|| CliError::Config(format!("{name}: missing argument '{what}'")))?;
    raw.parse()
        .map_err(|_| CliError::Config(format!("{name}: cannot parse {what} from '{raw}'")))
}

/// `marcum_q N a b`, `inv_marcum_q N lambda delta`, `chi2_sf N t`.
pub fn cmd_specfun(name: &str, args: &[String], stdout: &mut dyn Write) -> CliResult<()> {
    // Tighter than the library default so the printed digits are meaningful.
    let tol = AnalysisOptions::default().tolerance;
    if args.len() != 3 && name != "chi2_sf" || name == "chi2_sf" && args.len() != 2 {
        return Err(CliError::Config(format!("{name}: wrong number of arguments ({})", args.len())));
    }
    let value = match name {
        "marcum_q" => marcum_q(arg(name, args, 0, "N")?, arg(name, args, 1, "a")?, arg(name, args, 2, "b")?, &tol)?,
        "inv_marcum_q" => inv_marcum_q_threshold(
            arg(name, args, 0, "N")?,
            arg(name, args, 1, "lambda")?,
            arg(name, args, 2, "delta")?,
            &tol,
        )?,
        "chi2_sf" => {
            let n: usize = arg(name, args, 0, "N")?;
            let t: f64 = arg(name, args, 1, "t")?;
            if n == 0 || t.is_nan() {
                return Err(CliError::Config("chi2_sf: N must be >= 1 and t a number".into()));
            }
            central_chi2_sf(n, t)
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown function '{other}' (expected marcum_q, inv_marcum_q or chi2_sf)"
            )))
        }
    };
    writeln!(stdout, "{value}").map_err(|e| CliError::io("stdout", e))
}
