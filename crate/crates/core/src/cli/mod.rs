//! Command-line front end.
//!
//! Exit codes: 0 success, 1 parse or usage error, 2 validation error,
//! 3 numeric failure. Every failure writes one JSON line with an
//! `error_code` field to stderr.

mod input;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use input::{read_csv, CsvInput};

use crate::data::{EstimandKind, OutcomeKind};
use crate::error::{Error, ErrorCategory};
use crate::estimator::{estimate_all, EstimateConfig};
use crate::nuisance::{NuisanceConfig, OutcomeMethod, PropensityMethod, SdMethod};
use crate::simulation::{oracle_asymptotic_variances, run_monte_carlo, DgpSpec, McConfig, McValue, NuisanceMode, OracleVariances};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "attvar", version, about = "Effect-on-the-treated estimation with per-estimand variances")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NuisanceChoice {
    /// Oracle if `pi` and `mu0` columns are present, fitted otherwise.
    Auto,
    Fitted,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutcomeChoice {
    Continuous,
    Binary,
}

#[derive(Debug, clap::Args)]
pub struct FitArgs {
    /// Cross-fitting folds (1 disables cross-fitting).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub folds: u32,
    /// Propensity clipping level, in (0, 0.5).
    #[arg(long, default_value_t = 0.01, value_parser = parse_clip_eps)]
    pub clip_eps: f64,
    /// Iteration cap for the logistic propensity fit.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    pub irls_max_iter: u32,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate every requested estimand from a CSV file.
    Estimate {
        /// CSV with header `y,a,x1,...,xd` and optional `pi,mu0,mu1,sigma0,sigma1`.
        #[arg(long, short)]
        input: PathBuf,
        /// Comma-separated estimands, or `all`.
        #[arg(long, default_value = "all", value_parser = parse_estimands)]
        estimands: EstimandList,
        #[arg(long, default_value_t = 0.95, value_parser = parse_level)]
        ci_level: f64,
        #[arg(long, value_enum, default_value_t = NuisanceChoice::Auto)]
        nuisance: NuisanceChoice,
        #[arg(long, value_enum, default_value_t = OutcomeChoice::Continuous)]
        outcome: OutcomeChoice,
        #[command(flatten)]
        fit: FitArgs,
        /// Fold-assignment seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run a seeded Monte Carlo study for a data-generating spec.
    Simulate {
        /// JSON data-generating spec.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(2..))]
        n: u64,
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.95, value_parser = parse_level)]
        ci_level: f64,
        /// Use the generator's true nuisances instead of fitting them.
        #[arg(long)]
        oracle_nuisances: bool,
        #[command(flatten)]
        fit: FitArgs,
        /// Covariate draws for the population effect.
        #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(2..))]
        draws: u64,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Brute-force the true asymptotic variance of each estimand.
    Oracle {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 10_000_000, value_parser = clap::value_parser!(u64).range(2..))]
        draws: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimandList(pub Vec<EstimandKind>);

fn parse_estimands(s: &str) -> Result<EstimandList, String> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(EstimandList(EstimandKind::ALL.to_vec()));
    }
    let mut out = Vec::new();
    for part in s.split(',') {
        let k: EstimandKind = part.parse().map_err(|e: Error| e.to_string())?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    Ok(EstimandList(out))
}

fn parse_level(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("confidence level must lie in (0, 1), got {v}"))
    }
}

fn parse_clip_eps(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v < 0.5 {
        Ok(v)
    } else {
        Err(format!("clip-eps must lie in (0, 0.5), got {v}"))
    }
}

/// A failure with its process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub exit_code: i32,
    pub error_code: String,
    pub message: String,
}

impl CliError {
    pub fn parse(code: &str, message: String) -> Self {
        Self {
            exit_code: EXIT_PARSE,
            error_code: code.into(),
            message,
        }
    }

    fn to_json_line(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            error_code: &'a str,
            exit_code: i32,
            message: &'a str,
        }
        serde_json::to_string(&Line {
            error_code: &self.error_code,
            exit_code: self.exit_code,
            message: &self.message,
        })
        .expect("plain struct serializes")
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            exit_code: match e.category() {
                ErrorCategory::Validation => EXIT_VALIDATION,
                ErrorCategory::Numeric => EXIT_NUMERIC,
            },
            error_code: e.code().into(),
            message: e.to_string(),
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::parse("Io", format!("cannot read {}: {e}", path.display())))
}

fn load_spec(path: &Path) -> Result<DgpSpec, CliError> {
    // a malformed or unsupported spec is a parse-level failure
    DgpSpec::from_json(&read_file(path)?).map_err(|e| CliError::parse(e.code(), e.to_string()))
}

fn emit(text: &str, output: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::parse("Io", format!("cannot write output: {e}"));
    match output {
        Some(p) => std::fs::write(p, format!("{text}\n")).map_err(io_err),
        None => writeln!(stdout, "{text}").map_err(io_err),
    }
}

fn nuisance_config(choice: NuisanceChoice, has_oracle: bool, has_sigma: bool, fit: &FitArgs, seed: u64) -> NuisanceConfig {
    let base = NuisanceConfig {
        folds: fit.folds as usize,
        clip_eps: fit.clip_eps,
        irls_max_iter: fit.irls_max_iter as usize,
        seed,
        ..NuisanceConfig::default()
    };
    let oracle = match choice {
        NuisanceChoice::Auto => has_oracle,
        NuisanceChoice::Fitted => false,
        NuisanceChoice::Oracle => true,
    };
    if !oracle {
        return base;
    }
    NuisanceConfig {
        propensity_method: PropensityMethod::OracleSupplied,
        outcome_method: OutcomeMethod::OracleSupplied,
        sd_method: if has_sigma { SdMethod::OracleSupplied } else { SdMethod::Skip },
        ..base
    }
}

/// Output of the `oracle` command.
#[derive(Debug, Clone, Serialize)]
pub struct OracleTable {
    pub schema_version: u32,
    pub spec: DgpSpec,
    pub psi_patt: McValue,
    /// True asymptotic variance per estimand.
    pub variances: BTreeMap<EstimandKind, McValue>,
    pub details: OracleVariances,
}

fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Estimate {
            input,
            estimands,
            ci_level,
            nuisance,
            outcome,
            fit,
            seed,
            output,
        } => {
            let file = std::fs::File::open(&input)
                .map_err(|e| CliError::parse("Io", format!("cannot open {}: {e}", input.display())))?;
            let csv = read_csv(std::io::BufReader::new(file))?;
            let has_oracle = csv.has_oracle();
            let has_sigma = csv.oracle.sigma0.is_some() && csv.oracle.sigma1.is_some();
            let kind = match outcome {
                OutcomeChoice::Continuous => OutcomeKind::Continuous,
                OutcomeChoice::Binary => OutcomeKind::Binary,
            };
            let (ds, oracle) = csv.into_dataset(kind)?;
            let config = EstimateConfig {
                nuisance: nuisance_config(nuisance, has_oracle, has_sigma, &fit, seed),
                ci_level,
                estimands: estimands.0,
            };
            let report = estimate_all(&ds, &config, Some(&oracle))?;
            emit(&report.to_json(), output.as_deref(), stdout)
        }
        Command::Simulate {
            spec,
            n,
            reps,
            seed,
            ci_level,
            oracle_nuisances,
            fit,
            draws,
            output,
        } => {
            let spec = load_spec(&spec)?;
            let nuisance = if oracle_nuisances {
                NuisanceMode::Oracle
            } else {
                NuisanceMode::Fitted(nuisance_config(NuisanceChoice::Fitted, false, false, &fit, seed))
            };
            let cfg = McConfig {
                n: n as usize,
                reps: reps as usize,
                seed,
                ci_level,
                nuisance,
                truth_draws: draws,
            };
            let report = run_monte_carlo(&spec, &cfg)?;
            let _ = writeln!(stderr, "{}", report.ordering_summary());
            emit(&report.to_json(), output.as_deref(), stdout)
        }
        Command::Oracle { spec, draws, seed, output } => {
            let spec = load_spec(&spec)?;
            let details = oracle_asymptotic_variances(&spec, draws, seed)?;
            let table = OracleTable {
                schema_version: 1,
                psi_patt: details.psi_patt,
                variances: EstimandKind::ALL.iter().map(|&k| (k, details.for_kind(k))).collect(),
                spec,
                details,
            };
            emit(&crate::json::to_string_pretty(&table), output.as_deref(), stdout)
        }
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return EXIT_OK;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let _ = write!(stderr, "{e}");
            }
            let err = CliError::parse("Usage", e.kind().to_string() + ": " + e.to_string().lines().next().unwrap_or(""));
            let _ = writeln!(stderr, "{}", err.to_json_line());
            return err.exit_code;
        }
    };
    match execute(cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.to_json_line());
            e.exit_code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("attvar").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_str(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("estimate"));
    }

    #[test]
    fn usage_errors_exit_one_with_json() {
        let (code, _, err) = run_str(&["estimate"]);
        assert_eq!(code, EXIT_PARSE);
        let line: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
        assert_eq!(line["error_code"], "Usage");
        let (code, _, _) = run_str(&["oracle", "--spec", "x.json", "--draws", "0"]);
        assert_eq!(code, EXIT_PARSE);
        let (code, _, _) = run_str(&["estimate", "-i", "x.csv", "--ci-level", "1.5"]);
        assert_eq!(code, EXIT_PARSE);
    }

    #[test]
    fn estimand_lists() {
        assert_eq!(parse_estimands("all").unwrap().0.len(), 6);
        assert_eq!(parse_estimands("satt,patt,satt").unwrap().0, vec![EstimandKind::Satt, EstimandKind::Patt]);
        assert!(parse_estimands("att").is_err());
    }

    #[test]
    fn core_errors_map_to_exit_codes() {
        assert_eq!(CliError::from(Error::Singular).exit_code, EXIT_NUMERIC);
        assert_eq!(CliError::from(Error::MissingMu1).exit_code, EXIT_VALIDATION);
    }
}
