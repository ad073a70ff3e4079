//! `equicorr`: simulation, fitting, prediction, and evaluation for sparse
//! multivariate regression with equicorrelated errors. All commands are
//! deterministic given their flags and seed.

mod artifact;
mod commands;
mod csvio;

use clap::{Args, Parser, Subcommand};
use commands::{parse_grid, AsymptoticsArgs, CliError, FitArgs, SimulateArgs};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "equicorr", version, about = "Sparse multivariate regression with equicorrelated errors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonTuning {
    /// Number of cross-validation folds.
    #[arg(long = "cv-folds", default_value_t = 5)]
    cv_folds: usize,
    /// Comma-separated tuning grid (defaults to 10^(-4+0.5k), k = 0..14).
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scenario replications, fit every requested method with
    /// cross validation, and write data, per-replication metrics, and a
    /// quartile summary as CSV.
    Simulate {
        /// Scenario description (TOML).
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 1)]
        reps: u64,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        tuning: CommonTuning,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Read and write CSV files with a single header row.
        #[arg(long)]
        header: bool,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Fit one method on X/Y CSV files and write a fit artifact (JSON).
    Fit {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        /// One of: ols, lasso-comb, lasso-sep, ridge-comb, ridge-sep, mrcs,
        /// ap-mrcs, mrgcs, ap-mrgcs, oracle.
        #[arg(long)]
        method: String,
        /// Fixed tuning parameter; omit to select by cross validation.
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        tuning: CommonTuning,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// True precision matrix CSV (oracle method only).
        #[arg(long)]
        omega: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        header: bool,
        /// Fail (exit 4) when the fit does not converge.
        #[arg(long)]
        strict: bool,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Cap on outer iterations for the alternating methods.
        #[arg(long = "max-outer")]
        max_outer: Option<usize>,
    },
    /// Predict responses for new X rows from a fit artifact.
    Predict {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        header: bool,
    },
    /// Evaluate a fit artifact against the truth: model error, test
    /// prediction error, and support recovery rates.
    Eval {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long = "b-true")]
        b_true: PathBuf,
        #[arg(long = "sigma-x")]
        sigma_x: PathBuf,
        #[arg(long = "y-test")]
        y_test: PathBuf,
        #[arg(long = "x-test")]
        x_test: PathBuf,
        #[arg(long)]
        header: bool,
    },
    /// Monte Carlo table for the large-sample behavior of the
    /// adaptive-weight estimator.
    Asymptotics {
        #[arg(long, default_value_t = 3)]
        p: usize,
        #[arg(long, default_value_t = 3)]
        q: usize,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, default_value_t = 1.0)]
        eta2: f64,
        /// Comma-separated sample sizes.
        #[arg(long = "n-list", default_value = "200,800,3200")]
        n_list: String,
        #[arg(long, default_value_t = 500)]
        reps: usize,
        /// Adaptive-weight exponent (must exceed 1).
        #[arg(long, default_value_t = 2.0)]
        r: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path; prints to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn grid_from(tuning: &CommonTuning) -> Result<Vec<f64>, CliError> {
    match &tuning.grid {
        Some(s) => parse_grid(s),
        None => Ok(equicorr::solvers::default_lambda_grid()),
    }
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { scenario, reps, seed, tuning, out, header, threads } => {
            let grid = grid_from(&tuning)?;
            commands::cmd_simulate(&SimulateArgs {
                scenario,
                reps,
                seed,
                cv_folds: tuning.cv_folds,
                grid,
                out,
                header,
                threads,
            })
        }
        Command::Fit {
            x,
            y,
            method,
            lambda,
            tuning,
            seed,
            omega,
            out,
            header,
            strict,
            threads,
            max_outer,
        } => {
            let grid = grid_from(&tuning)?;
            commands::cmd_fit(&FitArgs {
                x,
                y,
                method,
                lambda,
                cv_folds: tuning.cv_folds,
                grid,
                seed,
                omega,
                out,
                header,
                strict,
                threads,
                max_outer,
            })
        }
        Command::Predict { fit, x, out, header } => commands::cmd_predict(&fit, &x, &out, header),
        Command::Eval { fit, b_true, sigma_x, y_test, x_test, header } => {
            commands::cmd_eval(&fit, &b_true, &sigma_x, &y_test, &x_test, header)
        }
        Command::Asymptotics { p, q, theta, eta2, n_list, reps, r, seed, out } => {
            let n_list: Vec<usize> = n_list
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<usize>().map_err(|_| {
                        CliError::Usage(format!("'{}' in --n-list is not an integer", tok.trim()))
                    })
                })
                .collect::<Result<_, _>>()?;
            commands::cmd_asymptotics(&AsymptoticsArgs {
                p,
                q,
                theta,
                eta2,
                n_list,
                reps,
                r,
                seed,
                out,
            })
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
