use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use volterra_nk::diagnostics::{precision_ladder, LadderBuilder};
use volterra_nk::{
    estimate_rate, solve as run_solver, uniform_grid, Grid, KernelRegistry, PrecisionContext,
    ProblemSpec, Scheme, SolveError, SolveResult, SolverConfig, Termination,
};

use crate::output::{self, opt_scalar, LADDER_HEADER, SUMMARY_HEADER};
use crate::settings::{split_list, Settings};
use crate::{CliError, CompareArgs, SolveArgs, SweepArgs, EXIT_NOT_CONVERGED, EXIT_OK};

pub const DEFAULT_KERNEL: &str = "bratu";
pub const DEFAULT_T_END: &str = "1";
pub const DEFAULT_STEP: &str = "0.05";
pub const DEFAULT_PRECISION: u32 = 50;
pub const DEFAULT_LAMBDAS: &str = "0.5,1.0,2.0,3.0";
pub const DEFAULT_TRACE_PATTERN: &str = "trace_lambda_{value}.csv";

const KERNEL_PARAMS: [&str; 5] = ["lambda", "u0", "uprime0", "a", "b"];

/// Everything needed to rebuild the problem at any precision.
struct Setup {
    kernel: String,
    params: BTreeMap<String, String>,
    t_end: String,
    step: String,
    scheme: Scheme,
    tol: Option<String>,
    max_iter: Option<usize>,
    ctx: PrecisionContext,
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

impl Setup {
    fn from_settings(s: &Settings) -> Result<Setup, CliError> {
        let digits = s
            .parse_int::<u32>("precision")?
            .unwrap_or(DEFAULT_PRECISION);
        let ctx = PrecisionContext::new(digits).map_err(usage)?;
        let scheme = s
            .get("scheme")
            .map(str::parse::<Scheme>)
            .transpose()
            .map_err(CliError::Usage)?
            .unwrap_or_default();
        let params = KERNEL_PARAMS
            .iter()
            .filter_map(|k| s.get(k).map(|v| (k.to_string(), v.to_string())))
            .collect();
        let setup = Setup {
            kernel: s.get_or("kernel", DEFAULT_KERNEL).to_string(),
            params,
            t_end: s.get_or("t-end", DEFAULT_T_END).to_string(),
            step: s.get_or("step", DEFAULT_STEP).to_string(),
            scheme,
            tol: s.get("tol").map(str::to_string),
            max_iter: s.parse_int::<usize>("max-iter")?,
            ctx,
        };
        setup.config(&ctx)?;
        setup.build(&ctx, None)?;
        Ok(setup)
    }

    fn config(&self, ctx: &PrecisionContext) -> Result<SolverConfig, CliError> {
        let mut cfg = SolverConfig::new(*ctx).with_scheme(self.scheme);
        if let Some(tol) = &self.tol {
            cfg = cfg.with_tolerance(ctx.parse(tol).map_err(|e| usage(format!("--tol: {e}")))?);
        }
        if let Some(n) = self.max_iter {
            cfg = cfg.with_max_iter(n);
        }
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }

    fn build(
        &self,
        ctx: &PrecisionContext,
        lambda: Option<&str>,
    ) -> Result<(ProblemSpec, Arc<Grid>), CliError> {
        let mut params = self.params.clone();
        if let Some(l) = lambda {
            params.insert("lambda".to_string(), l.to_string());
        }
        let problem = KernelRegistry::default()
            .build(&self.kernel, &params, &self.t_end, ctx)
            .map_err(usage)?;
        let t_end = ctx
            .parse(&self.t_end)
            .map_err(|e| usage(format!("--t-end: {e}")))?;
        let step = ctx
            .parse(&self.step)
            .map_err(|e| usage(format!("--step: {e}")))?;
        let grid = uniform_grid(&t_end, &step, ctx).map_err(usage)?;
        Ok((problem, Arc::new(grid)))
    }
}

fn path(text: Option<&str>) -> Option<PathBuf> {
    text.map(PathBuf::from)
}

fn report(label: &str, result: &SolveResult) {
    let last = result
        .trace
        .last()
        .map(|r| r.successive_diff.to_decimal_string())
        .unwrap_or_default();
    eprintln!(
        "{label}{} after {} iterations (last update {last})",
        result.termination, result.iterations_used
    );
}

pub fn solve(args: &SolveArgs) -> Result<i32, CliError> {
    let mut flags = args.problem.flags();
    flags.push(("out", args.out.clone()));
    flags.push(("trace", args.trace.clone()));
    let settings = Settings::merge(args.problem.config.as_deref(), flags)?;
    let setup = Setup::from_settings(&settings)?;
    let (problem, grid) = setup.build(&setup.ctx, None)?;
    let cfg = setup.config(&setup.ctx)?;
    let out = path(settings.get("out"));
    let trace_path = path(settings.get("trace"));
    match run_solver(&problem, &grid, None, &cfg) {
        Ok(result) => {
            output::write_solution(out.as_deref(), &result.solution)?;
            if let Some(p) = &trace_path {
                output::write_trace(Some(p), &result.trace)?;
            }
            report("", &result);
            Ok(if result.converged {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            })
        }
        Err(e @ (SolveError::Config(_) | SolveError::Grid(_))) => Err(usage(e)),
        Err(e) => {
            if let (Some(p), Some(trace)) = (&trace_path, e.partial_trace()) {
                output::write_trace(Some(p), trace)?;
            }
            eprintln!("solve failed: {e}");
            Ok(EXIT_NOT_CONVERGED)
        }
    }
}

/// One summary row of a sweep.
struct SweepRow {
    lambda: String,
    converged: bool,
    iterations: String,
    final_diff: String,
    fitted_order: String,
    status: &'static str,
}

impl SweepRow {
    fn cells(self) -> Vec<String> {
        vec![
            self.lambda,
            self.converged.to_string(),
            self.iterations,
            self.final_diff,
            self.fitted_order,
            self.status.to_string(),
        ]
    }
}

fn sweep_one(
    setup: &Setup,
    cfg: &SolverConfig,
    lambda: &str,
    trace_path: &Path,
) -> Result<SweepRow, CliError> {
    let (problem, grid) = setup.build(&setup.ctx, Some(lambda))?;
    let mut row = SweepRow {
        lambda: lambda.to_string(),
        converged: false,
        iterations: String::new(),
        final_diff: String::new(),
        fitted_order: String::new(),
        status: "failed",
    };
    let trace = match run_solver(&problem, &grid, None, cfg) {
        Ok(result) => {
            report(&format!("lambda = {lambda}: "), &result);
            row.converged = result.converged;
            row.status = match result.termination {
                Termination::Converged => "converged",
                Termination::MaxIterations => "max_iter",
                Termination::Diverged => "diverged",
            };
            if result.converged {
                if let Ok(est) = estimate_rate(&result.trace) {
                    row.fitted_order = est.fitted_order.to_decimal_string();
                }
            }
            result.trace
        }
        Err(e) => {
            eprintln!("lambda = {lambda}: {e}");
            let Some(trace) = e.partial_trace() else {
                return Ok(row);
            };
            // a Jacobian that stops being invertible means the iterates left
            // the basin; report it with the blow-ups
            if matches!(e, SolveError::Singular { .. }) {
                row.status = "diverged";
            }
            trace.clone()
        }
    };
    row.iterations = trace.len().to_string();
    row.final_diff = opt_scalar(trace.last().map(|r| &r.successive_diff));
    output::write_trace(Some(trace_path), &trace)?;
    Ok(row)
}

pub fn sweep(args: &SweepArgs) -> Result<i32, CliError> {
    let mut flags = args.problem.flags();
    flags.push(("lambdas", args.lambdas.clone()));
    flags.push(("trace-pattern", args.trace_pattern.clone()));
    flags.push(("summary", args.summary.clone()));
    let settings = Settings::merge(args.problem.config.as_deref(), flags)?;
    if settings.get("lambda").is_some() {
        return Err(usage("sweep takes --lambdas, not --lambda"));
    }
    if settings.get_or("kernel", DEFAULT_KERNEL) != "bratu" {
        return Err(usage("sweep is defined for the bratu kernel only"));
    }
    let setup = Setup::from_settings(&settings)?;
    let cfg = setup.config(&setup.ctx)?;
    let lambdas = split_list(settings.get_or("lambdas", DEFAULT_LAMBDAS));
    if lambdas.is_empty() {
        return Err(usage("--lambdas is empty"));
    }
    for l in &lambdas {
        setup
            .ctx
            .parse(l)
            .map_err(|e| usage(format!("--lambdas: {e}")))?;
    }
    let pattern = settings.get_or("trace-pattern", DEFAULT_TRACE_PATTERN);
    if lambdas.len() > 1 && !pattern.contains("{value}") {
        return Err(usage("--trace-pattern needs a {value} placeholder"));
    }
    let rows: Vec<SweepRow> = lambdas
        .par_iter()
        .map(|l| sweep_one(&setup, &cfg, l, Path::new(&pattern.replace("{value}", l))))
        .collect::<Result<_, _>>()?;
    let any_converged = rows.iter().any(|r| r.converged);
    let summary = path(settings.get("summary"));
    let origin = summary
        .as_ref()
        .map_or_else(|| "<stdout>".to_string(), |p| p.display().to_string());
    output::write_rows(
        output::open_sink(summary.as_deref())?,
        &SUMMARY_HEADER,
        rows.into_iter().map(SweepRow::cells),
        &origin,
    )?;
    Ok(if any_converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

pub fn compare_precision(args: &CompareArgs) -> Result<i32, CliError> {
    let mut flags = args.problem.flags();
    flags.push(("digit-levels", args.digit_levels.clone()));
    flags.push(("out", args.out.clone()));
    let settings = Settings::merge(args.problem.config.as_deref(), flags)?;
    let setup = Setup::from_settings(&settings)?;
    let cfg = setup.config(&setup.ctx)?;
    let levels = split_list(
        settings
            .get("digit-levels")
            .ok_or_else(|| usage("--digit-levels is required"))?,
    )
    .iter()
    .map(|d| {
        d.parse::<u32>()
            .map_err(|_| usage(format!("--digit-levels: {d:?} is not an integer")))
    })
    .collect::<Result<Vec<u32>, _>>()?;
    let build = |ctx: &PrecisionContext| setup.build(ctx, None).map_err(|e| e.to_string());
    let builder: &LadderBuilder<'_> = &build;
    let report = precision_ladder(builder, &cfg, &levels).map_err(usage)?;
    for level in &report.levels {
        match &level.outcome {
            Ok(r) => report_level(level.digits, r),
            Err(e) => eprintln!("{} digits: {e}", level.digits),
        }
    }
    let all_converged = report.levels.iter().all(|l| l.converged());
    let rows = report.levels.iter().map(|l| {
        vec![
            l.digits.to_string(),
            l.converged().to_string(),
            l.iterations().map(|n| n.to_string()).unwrap_or_default(),
            opt_scalar(l.deviation_from_next.as_ref()),
        ]
    });
    let out = path(settings.get("out"));
    let origin = out
        .as_ref()
        .map_or_else(|| "<stdout>".to_string(), |p| p.display().to_string());
    output::write_rows(
        output::open_sink(out.as_deref())?,
        &LADDER_HEADER,
        rows,
        &origin,
    )?;
    Ok(if all_converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn report_level(digits: u32, result: &SolveResult) {
    report(&format!("{digits} digits: "), result);
}
