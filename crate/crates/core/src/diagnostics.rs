//! Empirical convergence rates and precision-ladder comparisons.
//!
//! Rates come from a least-squares fit of `ln e_{k+1} = ln C + p·ln e_k` over
//! the longest strictly decreasing run of errors above a noise floor. Below
//! the floor successive differences measure quadrature noise rather than
//! contraction.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{sup_norm_diff_values, Grid};
use crate::kernels::ProblemSpec;
use crate::precision::{PrecisionContext, Scalar, MIN_DIGITS};
use crate::solver::{solve, IterationTrace, SolveResult, SolverConfig};

/// Fewest consecutive errors a fit will use.
pub const MIN_WINDOW: usize = 3;

#[derive(Debug, Clone, Error)]
pub enum DiagnosticsError {
    #[error(
        "need {MIN_WINDOW} consecutive decreasing errors above the noise floor {floor}, \
         found at most {found}"
    )]
    InsufficientData { floor: String, found: usize },
    #[error("invalid precision ladder: {0}")]
    Ladder(String),
}

#[derive(Debug, Clone)]
pub struct ConvergenceEstimate {
    /// `p` in `e_{k+1} ≈ C·e_k^p`.
    pub fitted_order: Scalar,
    pub fitted_constant: Scalar,
    /// Indices into the error sequence used by the fit.
    pub window: Range<usize>,
}

/// Longest run of strictly decreasing values above `floor`; ties go to the
/// earliest run.
fn fit_window(errors: &[Scalar], floor: &Scalar) -> Range<usize> {
    let mut best = 0..0;
    let mut start = 0;
    for i in 0..=errors.len() {
        let extends = i < errors.len()
            && errors[i] > *floor
            && errors[i].is_finite()
            && (i == start || errors[i] < errors[i - 1]);
        if extends {
            continue;
        }
        if i - start > best.len() {
            best = start..i;
        }
        start = if i < errors.len() && errors[i] > *floor && errors[i].is_finite() {
            i
        } else {
            i + 1
        };
    }
    best
}

/// Fits the order of an arbitrary error sequence.
pub fn estimate_rate_from_sequence(
    errors: &[Scalar],
    floor: &Scalar,
) -> Result<ConvergenceEstimate, DiagnosticsError> {
    let window = fit_window(errors, floor);
    if window.len() < MIN_WINDOW {
        return Err(DiagnosticsError::InsufficientData {
            floor: floor.to_decimal_string(),
            found: window.len(),
        });
    }
    let logs: Vec<Scalar> = errors[window.clone()]
        .iter()
        .map(|e| e.ln().expect("positive by window choice"))
        .collect();
    let xs = &logs[..logs.len() - 1];
    let ys = &logs[1..];
    let n = xs[0].int_like(xs.len() as i64);
    let mean = |v: &[Scalar]| v.iter().fold(v[0].int_like(0), |a, b| a + b) / &n;
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = mx.int_like(0);
    let mut sxx = mx.int_like(0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - &mx;
        sxy += &(&dx * &(y - &my));
        sxx += &(&dx * &dx);
    }
    let p = sxy / &sxx;
    let ln_c = my - &(&p * &mx);
    Ok(ConvergenceEstimate {
        fitted_order: p,
        fitted_constant: ln_c.exp(),
        window,
    })
}

/// Fits the successive differences of a trace above its noise floor.
pub fn estimate_rate(trace: &IterationTrace) -> Result<ConvergenceEstimate, DiagnosticsError> {
    estimate_rate_from_sequence(&trace.successive_diffs(), trace.noise_floor())
}

/// Fits the distances to the converged iterate, when the solve converged.
pub fn estimate_rate_to_fixed_point(
    trace: &IterationTrace,
) -> Option<Result<ConvergenceEstimate, DiagnosticsError>> {
    let errors = trace.fixed_point_errors()?;
    Some(estimate_rate_from_sequence(&errors, trace.noise_floor()))
}

/// One rung of a precision ladder.
#[derive(Debug)]
pub struct LadderLevel {
    pub digits: u32,
    pub outcome: Result<SolveResult, String>,
    /// Sup-norm distance to the next level's solution; absent for the last
    /// level and whenever either solve did not converge.
    pub deviation_from_next: Option<Scalar>,
}

impl LadderLevel {
    pub fn converged(&self) -> bool {
        matches!(&self.outcome, Ok(r) if r.converged)
    }

    pub fn iterations(&self) -> Option<usize> {
        self.outcome.as_ref().ok().map(|r| r.iterations_used)
    }
}

#[derive(Debug)]
pub struct LadderReport {
    pub levels: Vec<LadderLevel>,
}

impl LadderReport {
    pub fn deviations(&self) -> Vec<Option<&Scalar>> {
        self.levels
            .iter()
            .take(self.levels.len().saturating_sub(1))
            .map(|l| l.deviation_from_next.as_ref())
            .collect()
    }

    /// Whether the available deviations never grow with the level.
    pub fn deviations_nonincreasing(&self) -> bool {
        let present: Vec<&Scalar> = self.deviations().into_iter().flatten().collect();
        present.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Builds the problem and grid at a given precision; the ladder rebuilds both
/// per level so parameters are parsed at full precision every time.
pub type LadderBuilder<'a> =
    dyn Fn(&PrecisionContext) -> Result<(ProblemSpec, Arc<Grid>), String> + Sync + 'a;

/// Solves the same problem at each digit level and compares consecutive
/// solutions. Each level uses `cfg` moved to that precision, with its
/// tolerance raised to the level's default when `cfg.tolerance` is finer
/// than the level can resolve.
pub fn precision_ladder(
    build: &LadderBuilder<'_>,
    cfg: &SolverConfig,
    digit_levels: &[u32],
) -> Result<LadderReport, DiagnosticsError> {
    if digit_levels.len() < 2 {
        return Err(DiagnosticsError::Ladder(format!(
            "need at least two digit levels, got {}",
            digit_levels.len()
        )));
    }
    if let Some(bad) = digit_levels.iter().find(|&&d| d < MIN_DIGITS) {
        return Err(DiagnosticsError::Ladder(format!(
            "digit level {bad} is below the minimum of {MIN_DIGITS}"
        )));
    }
    let outcomes: Vec<Result<SolveResult, String>> = digit_levels
        .par_iter()
        .map(|&digits| {
            let ctx = PrecisionContext::new(digits).map_err(|e| e.to_string())?;
            let level_cfg = level_config(cfg, &ctx);
            let (problem, grid) = build(&ctx)?;
            solve(&problem, &grid, None, &level_cfg).map_err(|e| e.to_string())
        })
        .collect();
    let mut levels: Vec<LadderLevel> = digit_levels
        .iter()
        .zip(outcomes)
        .map(|(&digits, outcome)| LadderLevel {
            digits,
            outcome,
            deviation_from_next: None,
        })
        .collect();
    for i in 0..levels.len() - 1 {
        let deviation = match (&levels[i].outcome, &levels[i + 1].outcome) {
            (Ok(a), Ok(b)) if a.converged && b.converged => {
                sup_norm_diff_values(a.solution.values(), b.solution.values()).ok()
            }
            _ => None,
        };
        levels[i].deviation_from_next = deviation;
    }
    Ok(LadderReport { levels })
}

fn level_config(cfg: &SolverConfig, ctx: &PrecisionContext) -> SolverConfig {
    let moved = cfg.at_precision(*ctx);
    let default = SolverConfig::default_tolerance(&moved.rule, ctx);
    if moved.tolerance < default {
        moved.with_tolerance(default)
    } else {
        moved
    }
}
