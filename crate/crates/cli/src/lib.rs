//! Command-line front end for the `inband_sense` library.
//!
//! Exit codes: 0 success, 1 validation run failed, 2 configuration or usage
//! error, 3 numerical failure, 4 unreachable calibration target.

pub mod commands;
pub mod config;
mod error;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use inband_sense::detectors::DetectorVariant;

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "inband-sense", version, about = "In-band spectrum sensing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate (and, where available, evaluate analytically) a ROC curve.
    Roc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Compare analytic and simulated rates for ED1 or ED2 (linear).
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Find the threshold parameter for a target false-alarm rate.
    Calibrate {
        variant: DetectorVariant,
        target_pf: f64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate a special function: marcum_q N a b | inv_marcum_q N lambda delta | chi2_sf N t.
    Specfun {
        name: String,
        #[arg(allow_negative_numbers = true)]
        args: Vec<String>,
    },
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Roc { config, output } => commands::cmd_roc(&config, &output),
        Command::Validate { config, output } => commands::cmd_validate(&config, &output, stdout),
        Command::Calibrate {
            variant,
            target_pf,
            config,
        } => commands::cmd_calibrate(variant, target_pf, config.as_deref(), stdout),
        Command::Specfun { name, args } => commands::cmd_specfun(&name, &args, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "inband-sense: {e}");
            e.exit_code()
        }
    }
}
