//! CSV emission. Scalars are written as shortest round-trip decimal strings,
//! so re-parsing at the same precision reproduces them exactly.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use volterra_nk::{IterationTrace, Scalar, SolutionVector};

use crate::CliError;

pub const SOLUTION_HEADER: [&str; 2] = ["t", "u"];
pub const TRACE_HEADER: [&str; 4] = ["iter", "successive_diff", "residual_norm", "wall_time_s"];
pub const SUMMARY_HEADER: [&str; 6] = [
    "lambda",
    "converged",
    "iterations",
    "final_diff",
    "fitted_order",
    "status",
];
pub const LADDER_HEADER: [&str; 4] = ["digits", "converged", "iterations", "deviation_from_next"];

/// Destination for one CSV table: a file, or standard output when no path
/// was given.
pub fn open_sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|source| CliError::Io {
                path: p.display().to_string(),
                source,
            })?;
            Ok(Box::new(io::BufWriter::new(file)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

pub fn write_rows<W: Write>(
    sink: W,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
    origin: &str,
) -> Result<(), CliError> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    let wrap = |e: csv::Error| CliError::Csv {
        path: origin.to_string(),
        source: e,
    };
    writer.write_record(header).map_err(wrap)?;
    for row in rows {
        writer.write_record(&row).map_err(wrap)?;
    }
    writer.flush().map_err(|source| CliError::Io {
        path: origin.to_string(),
        source,
    })
}

fn origin(path: Option<&Path>) -> String {
    path.map_or_else(|| "<stdout>".to_string(), |p| p.display().to_string())
}

pub fn write_solution(path: Option<&Path>, solution: &SolutionVector) -> Result<(), CliError> {
    let rows = solution
        .grid()
        .nodes()
        .iter()
        .zip(solution.values())
        .map(|(t, u)| vec![t.to_decimal_string(), u.to_decimal_string()]);
    write_rows(open_sink(path)?, &SOLUTION_HEADER, rows, &origin(path))
}

pub fn write_trace(path: Option<&Path>, trace: &IterationTrace) -> Result<(), CliError> {
    let rows = trace.records().iter().map(|r| {
        vec![
            r.iter.to_string(),
            r.successive_diff.to_decimal_string(),
            r.residual_norm.to_decimal_string(),
            format!("{:.6}", r.wall_time.as_secs_f64()),
        ]
    });
    write_rows(open_sink(path)?, &TRACE_HEADER, rows, &origin(path))
}

pub fn opt_scalar(v: Option<&Scalar>) -> String {
    v.map(Scalar::to_decimal_string).unwrap_or_default()
}
