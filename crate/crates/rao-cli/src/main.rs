//! `rao` — run Rao β-score correlation tests on CSV data or execute
//! Monte-Carlo size/power scenarios.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical error.

mod io_utils;
mod scenario;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use rao_beta_score::estimators::FitConfig;
use rao_beta_score::matrix::SymMatrix;
use rao_beta_score::score_tests::{
    bartlett_lrt_independence, test_bivariate_closed_form, test_equicorr_fixed, test_equicorr_free,
    test_independence, test_specified_correlation, TestReport,
};
use rao_beta_score::sim::run_size_power;
use rao_beta_score::Error;

const EXIT_OK: i32 = 0;
const EXIT_USAGE: i32 = 2;
const EXIT_DATA: i32 = 3;
const EXIT_NUMERICAL: i32 = 4;

#[derive(Parser)]
#[command(
    name = "rao",
    version,
    about = "Rao beta-score tests on correlation matrices of multivariate data",
    long_about = "Robust (beta > 0) and classical (beta = 0) Rao score tests of correlation \
                  structure for multivariate normal data, plus a reproducible Monte-Carlo \
                  harness. Input CSV files hold one observation per row, one variable per \
                  column; a header row is auto-detected."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a correlation test on a CSV dataset at one or more beta values.
    Test(TestArgs),
    /// Run a Monte-Carlo size/power scenario from a declarative file.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct TestArgs {
    /// Which null hypothesis to test.
    #[arg(long, value_enum)]
    kind: Kind,
    /// CSV file with the p×p null correlation matrix (kind = specified).
    #[arg(long)]
    r0: Option<PathBuf>,
    /// Null intraclass correlation (kind = equicorr-fixed or bivariate).
    #[arg(long)]
    rho0: Option<f64>,
    /// Comma-separated beta values (0 = classical test).
    #[arg(long, value_delimiter = ',', default_value = "0")]
    beta: Vec<f64>,
    /// Relative tolerance of the restricted fit.
    #[arg(long, default_value_t = FitConfig::default().tolerance)]
    tolerance: f64,
    /// Iteration budget of the restricted fit.
    #[arg(long, default_value_t = FitConfig::default().max_iterations)]
    max_iterations: usize,
    /// Fixed-point damping factor in (0, 1].
    #[arg(long, default_value_t = FitConfig::default().damping)]
    damping: f64,
    /// Output format for the reports on standard output.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// CSV dataset: rows are observations, columns are variables.
    data: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Output format for the summary on standard output.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Scenario file (key = value lines; see the crate README).
    scenario: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    /// H0: R equals the matrix loaded from --r0.
    Specified,
    /// H0: all correlations equal --rho0.
    EquicorrFixed,
    /// H0: the variables are uncorrelated.
    Independence,
    /// H0: all correlations share an unspecified common value.
    EquicorrFree,
    /// p = 2 closed form of the specified test at --rho0.
    Bivariate,
    /// Bartlett's likelihood-ratio test of independence (beta ignored).
    Bartlett,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Data(_) | Error::Structure(_) => EXIT_DATA,
        Error::Domain(_) => EXIT_USAGE,
        Error::Factorization(_)
        | Error::Degeneracy(_)
        | Error::NonConvergence { .. }
        | Error::Rank(_)
        | Error::Validity(_) => EXIT_NUMERICAL,
    }
}

/// Load and validate a correlation-matrix CSV: square, matching dimension,
/// symmetric, unit diagonal, positive definite.
pub fn validate_correlation_file(path: &Path, p: usize) -> rao_beta_score::Result<SymMatrix> {
    let raw = io_utils::read_data_matrix(path)?;
    if raw.nrows() != raw.ncols() {
        return Err(Error::Data(format!(
            "{}: correlation matrix must be square, got {}x{}",
            path.display(),
            raw.nrows(),
            raw.ncols()
        )));
    }
    if raw.nrows() != p {
        return Err(Error::Data(format!(
            "{}: correlation matrix is {}x{} but the data has {p} columns",
            path.display(),
            raw.nrows(),
            raw.ncols()
        )));
    }
    let sym = SymMatrix::new(raw)?;
    for j in 0..p {
        if (sym.as_array()[(j, j)] - 1.0).abs() > 1e-8 {
            return Err(Error::Data(format!(
                "{}: diagonal entry {} at position {j} is not 1",
                path.display(),
                sym.as_array()[(j, j)]
            )));
        }
    }
    // positive definiteness via the null test machinery's own check
    rao_beta_score::gaussian::GaussianParams::new(
        ndarray::Array1::zeros(p),
        ndarray::Array1::ones(p),
        SymMatrix::new(sym.as_array().clone())?,
    )?;
    Ok(sym)
}

fn cmd_test(args: &TestArgs) -> i32 {
    // flag pairing
    let needs_r0 = args.kind == Kind::Specified;
    let needs_rho0 = matches!(args.kind, Kind::EquicorrFixed | Kind::Bivariate);
    if needs_r0 && args.r0.is_none() {
        eprintln!("error: --kind specified requires --r0 <FILE>");
        return EXIT_USAGE;
    }
    if needs_rho0 && args.rho0.is_none() {
        eprintln!("error: this test kind requires --rho0 <VALUE>");
        return EXIT_USAGE;
    }
    if !needs_r0 && args.r0.is_some() {
        eprintln!("error: --r0 is only meaningful with --kind specified");
        return EXIT_USAGE;
    }
    if !needs_rho0 && args.rho0.is_some() {
        eprintln!("error: --rho0 is only meaningful with --kind equicorr-fixed or bivariate");
        return EXIT_USAGE;
    }
    if args.beta.iter().any(|b| !(*b >= 0.0)) {
        eprintln!("error: beta values must be nonnegative");
        return EXIT_USAGE;
    }

    let data = match io_utils::read_data_matrix(&args.data) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    let (n, p) = (data.nrows(), data.ncols());
    if n < 2 || p < 2 {
        eprintln!("error: need at least 2 rows and 2 columns, got {n}x{p}");
        return EXIT_DATA;
    }
    if n <= p {
        eprintln!(
            "warning: n = {n} <= p = {p}; asymptotic calibration is unreliable{}",
            if args.kind == Kind::Bartlett {
                " and Bartlett's determinant is null"
            } else {
                ", though the Rao statistic remains well-defined"
            }
        );
    }

    let r0 = match &args.r0 {
        Some(path) => match validate_correlation_file(path, p) {
            Ok(m) => Some(m),
            Err(e) => {
                eprintln!("error: {e}");
                return exit_code_for(&e);
            }
        },
        None => None,
    };

    let cfg = FitConfig {
        tolerance: args.tolerance,
        max_iterations: args.max_iterations,
        damping: args.damping,
    };
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }

    // Bartlett ignores beta: one report
    let betas: Vec<f64> = if args.kind == Kind::Bartlett {
        vec![0.0]
    } else {
        args.beta.clone()
    };

    let mut worst = EXIT_OK;
    let mut emitted_header = false;
    for &beta in &betas {
        let result: rao_beta_score::Result<TestReport> = match args.kind {
            Kind::Specified => test_specified_correlation(&data, r0.as_ref().unwrap(), beta, &cfg),
            Kind::EquicorrFixed => test_equicorr_fixed(&data, args.rho0.unwrap(), beta, &cfg),
            Kind::Independence => test_independence(&data, beta, &cfg),
            Kind::EquicorrFree => test_equicorr_free(&data, beta, &cfg),
            Kind::Bivariate => test_bivariate_closed_form(&data, args.rho0.unwrap(), beta, &cfg),
            Kind::Bartlett => bartlett_lrt_independence(&data),
        };
        match result {
            Ok(report) => match args.format {
                Format::Json => println!("{}", io_utils::report_json(&report)),
                Format::Csv => {
                    if !emitted_header {
                        println!("{}", io_utils::REPORT_CSV_HEADER);
                        emitted_header = true;
                    }
                    println!("{}", io_utils::report_csv_row(&report));
                }
            },
            Err(e) => {
                eprintln!("error: beta = {beta}: {e}");
                worst = worst.max(exit_code_for(&e));
            }
        }
    }
    worst
}

fn cmd_simulate(args: &SimulateArgs) -> i32 {
    let spec = match scenario::parse_scenario(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };

    // RAO_THREADS caps the worker pool; results are seed-deterministic
    // regardless of the cap.
    let run = || run_size_power(&spec);
    let summary = match std::env::var("RAO_THREADS") {
        Ok(value) => {
            let threads: usize = match value.parse() {
                Ok(t) if t >= 1 => t,
                _ => {
                    eprintln!("error: RAO_THREADS must be a positive integer, got '{value}'");
                    return EXIT_USAGE;
                }
            };
            let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: cannot build a {threads}-thread pool: {e}");
                    return EXIT_NUMERICAL;
                }
            };
            pool.install(run)
        }
        Err(_) => run(),
    };

    match summary {
        Ok(summary) => {
            match args.format {
                Format::Json => println!("{}", io_utils::summary_json(&summary)),
                Format::Csv => {
                    println!("{}", io_utils::SUMMARY_CSV_HEADER);
                    for row in io_utils::summary_csv_rows(&summary) {
                        println!("{row}");
                    }
                }
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Test(args) => cmd_test(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    std::process::exit(code);
}
