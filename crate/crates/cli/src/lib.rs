//! Command-line front end for `volterra-nk`.
//!
//! Three commands share one set of problem flags:
//!
//! * `solve` writes the solution (`t,u`) and iteration trace CSVs;
//! * `sweep` solves the Bratu problem for a list of `λ` values, one trace per
//!   value plus a summary table;
//! * `compare-precision` runs a precision ladder and tabulates the deviation
//!   between consecutive digit levels.
//!
//! Exit codes: 0 converged, 2 ran but did not converge, 1 usage or
//! configuration error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod output;
pub mod settings;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Parser)]
#[command(
    name = "volterra",
    version,
    about = "Nonlinear Volterra integral equation solver"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem and write its solution and trace.
    Solve(SolveArgs),
    /// Solve the Bratu problem for several λ values.
    Sweep(SweepArgs),
    /// Solve one problem at several precisions and compare.
    ComparePrecision(CompareArgs),
}

/// Problem and solver flags shared by every command. Numbers are kept as
/// text and parsed at the working precision.
#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// `key = value` file mirroring these flags; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// bratu or linear.
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub u0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub uprime0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<String>,
    #[arg(long)]
    pub t_end: Option<String>,
    #[arg(long)]
    pub step: Option<String>,
    /// Significant decimal digits (default 50).
    #[arg(long)]
    pub precision: Option<String>,
    /// Stop when the sup-norm update falls below this.
    #[arg(long)]
    pub tol: Option<String>,
    #[arg(long)]
    pub max_iter: Option<String>,
    /// picard or newton (default).
    #[arg(long)]
    pub scheme: Option<String>,
}

impl ProblemArgs {
    fn flags(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("kernel", self.kernel.clone()),
            ("lambda", self.lambda.clone()),
            ("u0", self.u0.clone()),
            ("uprime0", self.uprime0.clone()),
            ("a", self.a.clone()),
            ("b", self.b.clone()),
            ("t-end", self.t_end.clone()),
            ("step", self.step.clone()),
            ("precision", self.precision.clone()),
            ("tol", self.tol.clone()),
            ("max-iter", self.max_iter.clone()),
            ("scheme", self.scheme.clone()),
        ]
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Solution CSV (standard output when omitted).
    #[arg(long)]
    pub out: Option<String>,
    /// Iteration trace CSV.
    #[arg(long)]
    pub trace: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Comma-separated λ values (default 0.5,1.0,2.0,3.0).
    #[arg(long, allow_hyphen_values = true)]
    pub lambdas: Option<String>,
    /// Trace file name per λ; `{value}` is replaced by the λ text.
    #[arg(long)]
    pub trace_pattern: Option<String>,
    /// Summary CSV (standard output when omitted).
    #[arg(long)]
    pub summary: Option<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Comma-separated digit counts, at least two, each at least 15.
    #[arg(long)]
    pub digit_levels: Option<String>,
    /// Comparison CSV (standard output when omitted).
    #[arg(long)]
    pub out: Option<String>,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match &cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::ComparePrecision(a) => commands::compare_precision(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
