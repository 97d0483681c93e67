//! Successive approximation and Newton–Kantorovich iteration for the
//! discretized equation.
//!
//! With `ũ` the piecewise-linear interpolant of the nodal values `u_i`, the
//! discrete operator is
//!
//! ```text
//! F(u)_i = u_i − g(t_i) − ∫₀^{t_i} K(t_i, s, ũ(s)) ds
//! ```
//!
//! and its Jacobian, obtained by expanding `ũ` in the hat basis `φ_j`, is
//!
//! ```text
//! A_ij = δ_ij − ∫₀^{t_i} ∂K/∂u(t_i, s, ũ(s)) φ_j(s) ds.
//! ```
//!
//! Picard iteration applies `u ← g + ∫K(·, s, ũ)`; Newton solves `A·δ = −F(u)`
//! and sets `u ← u + δ`. Every inner integral is split at the grid nodes, where
//! the interpolant has kinks.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{sup_norm_diff_values, Grid, GridError, SolutionVector};
use crate::interp::{hat_on_segment, interp_on_segment};
use crate::kernels::ProblemSpec;
use crate::linalg::{solve_linear, DenseMatrix, LinalgError};
use crate::precision::{PrecisionContext, Scalar};
use crate::quad::{Integrator, QuadError, QuadratureRule};

/// Growth factor (over [`DIVERGENCE_WINDOW`] consecutive increases of the
/// successive difference) that aborts a solve as divergent.
pub const DIVERGENCE_GROWTH: i64 = 10;
pub const DIVERGENCE_WINDOW: usize = 3;
/// Iterates or integrals beyond `10^BLOW_UP_EXPONENT` in magnitude count as
/// divergence. The multiprecision exponent range is far wider than any
/// meaningful solution, so overflow alone would be reached only after
/// astronomically large intermediate values.
pub const BLOW_UP_EXPONENT: i32 = 300;
pub const DEFAULT_MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    Picard,
    #[default]
    Newton,
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Scheme, String> {
        match s {
            "picard" => Ok(Scheme::Picard),
            "newton" => Ok(Scheme::Newton),
            other => Err(format!(
                "unknown scheme {other:?} (expected picard or newton)"
            )),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Picard => "picard",
            Scheme::Newton => "newton",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub scheme: Scheme,
    /// Stop once the sup-norm successive difference falls below this.
    pub tolerance: Scalar,
    pub max_iter: usize,
    pub precision: PrecisionContext,
    pub rule: QuadratureRule,
}

impl SolverConfig {
    /// Newton, tanh-sinh at the default target, tolerance
    /// `10^−(target_digits − 5)`.
    pub fn new(precision: PrecisionContext) -> SolverConfig {
        let rule = QuadratureRule::tanh_sinh(&precision);
        SolverConfig {
            scheme: Scheme::default(),
            tolerance: Self::default_tolerance(&rule, &precision),
            max_iter: DEFAULT_MAX_ITER,
            precision,
            rule,
        }
    }

    pub fn default_tolerance(rule: &QuadratureRule, ctx: &PrecisionContext) -> Scalar {
        ctx.pow10(-(rule.target_digits as i32 - 5).max(1))
    }

    /// Smallest tolerance the quadrature noise allows: `10^(2 − target_digits)`.
    pub fn tolerance_floor(&self) -> Scalar {
        self.precision.pow10(2 - self.rule.target_digits as i32)
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> SolverConfig {
        self.scheme = scheme;
        self
    }

    pub fn with_tolerance(mut self, tolerance: Scalar) -> SolverConfig {
        self.tolerance = tolerance.round_to(&self.precision);
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> SolverConfig {
        self.max_iter = max_iter;
        self
    }

    pub fn with_rule(mut self, rule: QuadratureRule) -> SolverConfig {
        self.rule = rule;
        self
    }

    /// The same settings at another precision: the quadrature target moves
    /// with the precision, the tolerance is kept.
    pub fn at_precision(&self, precision: PrecisionContext) -> SolverConfig {
        SolverConfig {
            scheme: self.scheme,
            tolerance: self.tolerance.round_to(&precision),
            max_iter: self.max_iter,
            precision,
            rule: self.rule.retargeted(&precision),
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        self.rule
            .validate(&self.precision)
            .map_err(|e| SolveError::Config(e.to_string()))?;
        if self.max_iter == 0 {
            return Err(SolveError::Config("max_iter must be positive".into()));
        }
        if self.tolerance.is_sign_negative() || self.tolerance.is_zero() {
            return Err(SolveError::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.tolerance < self.tolerance_floor() {
            return Err(SolveError::Config(format!(
                "tolerance {} is below the quadrature noise floor {} (target {} digits)",
                self.tolerance,
                self.tolerance_floor(),
                self.rule.target_digits
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    /// `‖u^(k+1) − u^(k)‖_∞` (for Newton, `‖δ^(k)‖_∞`).
    pub successive_diff: Scalar,
    /// `‖F(u^(k+1))‖_∞`.
    pub residual_norm: Scalar,
    /// `max_i |u^(k+1)_i − u*(t_i)|` when the problem carries an exact solution.
    pub oracle_error: Option<Scalar>,
    /// `‖u^(k+1) − u_final‖_∞`, filled in once the solve has converged.
    pub fixed_point_error: Option<Scalar>,
    pub wall_time: Duration,
}

/// Per-iteration history of a solve.
#[derive(Debug, Clone)]
pub struct IterationTrace {
    records: Vec<IterationRecord>,
    noise_floor: Scalar,
}

impl IterationTrace {
    /// `noise_floor` marks where successive differences stop measuring
    /// contraction and start measuring quadrature error.
    pub fn new(noise_floor: Scalar) -> IterationTrace {
        IterationTrace {
            records: Vec::new(),
            noise_floor,
        }
    }

    /// Builds a trace from bare successive differences (residuals zero).
    pub fn from_diffs(diffs: &[Scalar], noise_floor: Scalar) -> IterationTrace {
        let mut trace = IterationTrace::new(noise_floor);
        for d in diffs {
            let zero = d.int_like(0);
            trace.push(d.clone(), zero, None, Duration::ZERO);
        }
        trace
    }

    pub fn push(
        &mut self,
        successive_diff: Scalar,
        residual_norm: Scalar,
        oracle_error: Option<Scalar>,
        wall_time: Duration,
    ) {
        self.records.push(IterationRecord {
            iter: self.records.len(),
            successive_diff,
            residual_norm,
            oracle_error,
            fixed_point_error: None,
            wall_time,
        });
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn noise_floor(&self) -> &Scalar {
        &self.noise_floor
    }

    pub fn successive_diffs(&self) -> Vec<Scalar> {
        self.records
            .iter()
            .map(|r| r.successive_diff.clone())
            .collect()
    }

    pub fn oracle_errors(&self) -> Option<Vec<Scalar>> {
        self.records
            .iter()
            .map(|r| r.oracle_error.clone())
            .collect()
    }

    pub fn fixed_point_errors(&self) -> Option<Vec<Scalar>> {
        self.records
            .iter()
            .map(|r| r.fixed_point_error.clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// Successive differences blew up, or iterates left the finite range.
    Diverged,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iter",
            Termination::Diverged => "diverged",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub solution: SolutionVector,
    pub trace: IterationTrace,
    pub converged: bool,
    pub termination: Termination,
    pub iterations_used: usize,
}

impl SolveResult {
    pub fn diverged(&self) -> bool {
        self.termination == Termination::Diverged
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("quadrature failed at iteration {iteration}, node {node}: {source}")]
    Quadrature {
        iteration: usize,
        node: usize,
        #[source]
        source: QuadError,
        trace: Box<IterationTrace>,
    },
    #[error("Fréchet matrix is singular at iteration {iteration}: {source}")]
    Singular {
        iteration: usize,
        #[source]
        source: LinalgError,
        trace: Box<IterationTrace>,
    },
}

impl SolveError {
    /// Iterations completed before the failure, when any.
    pub fn partial_trace(&self) -> Option<&IterationTrace> {
        match self {
            SolveError::Quadrature { trace, .. } | SolveError::Singular { trace, .. } => {
                Some(trace)
            }
            _ => None,
        }
    }
}

/// Quadrature failure at a node, before iteration context is attached.
#[derive(Debug)]
pub struct NodeQuadError {
    pub node: usize,
    pub source: QuadError,
}

/// A problem bound to a grid and an integrator; evaluates the discrete
/// operator, the Picard map and the Fréchet matrix.
pub struct Discretization<'a> {
    problem: &'a ProblemSpec,
    grid: &'a Grid,
    integrator: Integrator,
    ctx: PrecisionContext,
    forcing: Vec<Scalar>,
}

impl<'a> Discretization<'a> {
    pub fn new(
        problem: &'a ProblemSpec,
        grid: &'a Grid,
        rule: &QuadratureRule,
    ) -> Result<Discretization<'a>, SolveError> {
        let ctx = *grid.context();
        let fuzz = ctx.pow10(5 - ctx.digits() as i32);
        if *grid.t_end() > problem.t_end().clone() + &fuzz {
            return Err(SolveError::Config(format!(
                "grid ends at {} beyond the problem horizon {}",
                grid.t_end(),
                problem.t_end()
            )));
        }
        let integrator =
            Integrator::new(rule, &ctx).map_err(|e| SolveError::Config(e.to_string()))?;
        let forcing = grid
            .nodes()
            .iter()
            .map(|t| problem.inhomogeneous(t).round_to(&ctx))
            .collect();
        Ok(Discretization {
            problem,
            grid,
            integrator,
            ctx,
            forcing,
        })
    }

    pub fn forcing(&self) -> &[Scalar] {
        &self.forcing
    }

    /// `∫₀^{t_i} K(t_i, s, ũ(s)) ds` at working precision.
    fn kernel_integral(&self, i: usize, u: &[Scalar]) -> Result<Scalar, NodeQuadError> {
        let t = self.grid.node(i);
        let kernel = self.problem.kernel();
        self.integrator
            .integrate_segments(
                |seg, s| kernel.eval(t, s, &interp_on_segment(s, self.grid, u, seg)),
                self.grid,
                i,
            )
            .map_err(|source| NodeQuadError { node: i, source })
    }

    /// Picard map `g(t_i) + ∫₀^{t_i} K(t_i, s, ũ(s)) ds`.
    pub fn picard_map(&self, u: &[Scalar]) -> Result<Vec<Scalar>, NodeQuadError> {
        (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                if i == 0 {
                    return Ok(self.forcing[0].clone());
                }
                let integral = self.kernel_integral(i, u)?;
                Ok((integral + &self.forcing[i]).round_to(&self.ctx))
            })
            .collect()
    }

    /// `F(u)_i = u_i − g(t_i) − ∫₀^{t_i} K(t_i, s, ũ(s)) ds`.
    pub fn residual(&self, u: &[Scalar]) -> Result<Vec<Scalar>, NodeQuadError> {
        (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let base = &u[i] - &self.forcing[i];
                if i == 0 {
                    return Ok(base.round_to(&self.ctx));
                }
                let integral = self.kernel_integral(i, u)?;
                Ok((base - &integral).round_to(&self.ctx))
            })
            .collect()
    }

    /// `A_ij = δ_ij − ∫₀^{t_i} ∂K/∂u(t_i, s, ũ(s)) φ_j(s) ds`. On each segment
    /// only the two hats `φ_k`, `φ_{k+1}` are nonzero; both are integrated
    /// from one set of kernel evaluations.
    pub fn frechet_matrix(&self, u: &[Scalar]) -> Result<DenseMatrix, NodeQuadError> {
        let n = self.grid.len();
        let kernel = self.problem.kernel();
        let rows: Vec<Vec<Scalar>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![self.ctx.zero(); n];
                row[i] = self.ctx.one();
                let t = self.grid.node(i);
                for seg in 0..i {
                    let parts = self
                        .integrator
                        .integrate_many(
                            2,
                            |s, buf| {
                                let du =
                                    kernel.eval_du(t, s, &interp_on_segment(s, self.grid, u, seg));
                                buf[0] = &du * &hat_on_segment(seg, s, self.grid, seg);
                                buf[1] = du * &hat_on_segment(seg + 1, s, self.grid, seg);
                            },
                            self.grid.node(seg),
                            self.grid.node(seg + 1),
                        )
                        .map_err(|source| NodeQuadError { node: i, source })?;
                    row[seg] -= &parts[0].value;
                    row[seg + 1] -= &parts[1].value;
                }
                Ok(row.into_iter().map(|v| v.round_to(&self.ctx)).collect())
            })
            .collect::<Result<_, NodeQuadError>>()?;
        Ok(DenseMatrix::from_rows(rows).expect("square by construction"))
    }

    fn oracle_error(&self, u: &[Scalar]) -> Option<Scalar> {
        if !self.problem.has_exact() {
            return None;
        }
        let exact: Vec<Scalar> = self
            .grid
            .nodes()
            .iter()
            .map(|t| self.problem.exact(t).expect("exact solution present"))
            .collect();
        sup_norm_diff_values(u, &exact).ok()
    }
}

/// `F(u)` at the nodes of `grid`.
pub fn residual(
    problem: &ProblemSpec,
    grid: &Arc<Grid>,
    u: &SolutionVector,
    rule: &QuadratureRule,
) -> Result<SolutionVector, SolveError> {
    check_vector(grid, u)?;
    let disc = Discretization::new(problem, grid, rule)?;
    let r = disc
        .residual(u.values())
        .map_err(|e| quad_error(0, e, IterationTrace::new(grid.context().zero())))?;
    Ok(SolutionVector::new(grid.clone(), r)?)
}

/// The discretized Fréchet derivative of `F` at `u`.
pub fn assemble_frechet_matrix(
    problem: &ProblemSpec,
    grid: &Arc<Grid>,
    u: &SolutionVector,
    rule: &QuadratureRule,
) -> Result<DenseMatrix, SolveError> {
    check_vector(grid, u)?;
    let disc = Discretization::new(problem, grid, rule)?;
    disc.frechet_matrix(u.values())
        .map_err(|e| quad_error(0, e, IterationTrace::new(grid.context().zero())))
}

/// The default starting iterate: the constant `g(t₀)`.
pub fn default_initial_guess(problem: &ProblemSpec, grid: &Arc<Grid>) -> SolutionVector {
    let g0 = problem.inhomogeneous(grid.node(0));
    SolutionVector::constant(grid.clone(), &g0)
}

/// Runs the scheme selected in `cfg`, starting from `u0` or, when absent,
/// from [`default_initial_guess`].
pub fn solve(
    problem: &ProblemSpec,
    grid: &Arc<Grid>,
    u0: Option<&SolutionVector>,
    cfg: &SolverConfig,
) -> Result<SolveResult, SolveError> {
    let default_guess;
    let u0 = match u0 {
        Some(u) => u,
        None => {
            default_guess = default_initial_guess(problem, grid);
            &default_guess
        }
    };
    match cfg.scheme {
        Scheme::Picard => picard_solve(problem, grid, u0, cfg),
        Scheme::Newton => newton_solve(problem, grid, u0, cfg),
    }
}

fn check_vector(grid: &Arc<Grid>, u: &SolutionVector) -> Result<(), GridError> {
    if Arc::ptr_eq(grid, u.grid()) || grid.same_nodes(u.grid()) {
        Ok(())
    } else {
        Err(GridError::Shape(
            "initial iterate lives on a different grid".into(),
        ))
    }
}

fn quad_error(iteration: usize, e: NodeQuadError, trace: IterationTrace) -> SolveError {
    SolveError::Quadrature {
        iteration,
        node: e.node,
        source: e.source,
        trace: Box::new(trace),
    }
}

fn blow_up_ceiling(ctx: &PrecisionContext) -> Scalar {
    ctx.pow10(BLOW_UP_EXPONENT)
}

fn exceeds(v: &Scalar, ceiling: &Scalar) -> bool {
    !v.is_finite() || v.abs() > *ceiling
}

/// Quadrature failures caused by a runaway iterate are reported as
/// divergence rather than as errors.
fn is_blow_up(e: &NodeQuadError, ceiling: &Scalar) -> bool {
    match &e.source {
        QuadError::NonFinite { .. } => true,
        QuadError::Accuracy { estimate, .. } => exceeds(estimate, ceiling),
        _ => false,
    }
}

fn any_exceeds(values: &[Scalar], ceiling: &Scalar) -> bool {
    values.iter().any(|v| exceeds(v, ceiling))
}

fn diverging(trace: &IterationTrace) -> bool {
    let records = trace.records();
    if records
        .last()
        .is_some_and(|r| !r.successive_diff.is_finite())
    {
        return true;
    }
    if records.len() <= DIVERGENCE_WINDOW {
        return false;
    }
    let tail = &records[records.len() - DIVERGENCE_WINDOW - 1..];
    let increasing = tail
        .windows(2)
        .all(|w| w[1].successive_diff > w[0].successive_diff);
    let first = &tail[0].successive_diff;
    let last = &tail[DIVERGENCE_WINDOW].successive_diff;
    increasing && *last >= first * &first.int_like(DIVERGENCE_GROWTH)
}

struct Run<'a> {
    disc: Discretization<'a>,
    grid: Arc<Grid>,
    cfg: SolverConfig,
    trace: IterationTrace,
    ceiling: Scalar,
    history: Vec<Vec<Scalar>>,
}

impl<'a> Run<'a> {
    fn start(
        problem: &'a ProblemSpec,
        grid: &'a Arc<Grid>,
        u0: &SolutionVector,
        cfg: &SolverConfig,
        scheme: Scheme,
    ) -> Result<Run<'a>, SolveError> {
        if cfg.scheme != scheme {
            return Err(SolveError::Config(format!(
                "{scheme} solver called with scheme {}",
                cfg.scheme
            )));
        }
        cfg.validate()?;
        if *grid.context() != cfg.precision {
            return Err(SolveError::Config(format!(
                "grid built at {} digits but the solver runs at {}",
                grid.context().digits(),
                cfg.precision.digits()
            )));
        }
        check_vector(grid, u0)?;
        let disc = Discretization::new(problem, grid, &cfg.rule)?;
        let noise_floor = cfg.precision.pow10(3 - cfg.rule.target_digits as i32);
        Ok(Run {
            disc,
            grid: grid.clone(),
            cfg: cfg.clone(),
            trace: IterationTrace::new(noise_floor),
            ceiling: blow_up_ceiling(&cfg.precision),
            history: Vec::new(),
        })
    }

    fn record(&mut self, u_new: &[Scalar], diff: Scalar, residual_norm: Scalar, started: Instant) {
        let oracle = self.disc.oracle_error(u_new);
        self.trace
            .push(diff, residual_norm, oracle, started.elapsed());
        self.history.push(u_new.to_vec());
    }

    fn finish(mut self, u: Vec<Scalar>, termination: Termination) -> SolveResult {
        if termination == Termination::Converged {
            for (rec, iterate) in self.trace.records.iter_mut().zip(&self.history) {
                rec.fixed_point_error = sup_norm_diff_values(iterate, &u).ok();
            }
        }
        let iterations_used = self.trace.len();
        SolveResult {
            solution: SolutionVector::new(self.grid.clone(), u).expect("length preserved"),
            trace: self.trace,
            converged: termination == Termination::Converged,
            termination,
            iterations_used,
        }
    }

    fn quad_failure(&self, iteration: usize, e: NodeQuadError) -> SolveError {
        quad_error(iteration, e, self.trace.clone())
    }

    /// Checks the stopping rules after a record has been pushed.
    fn verdict(&self) -> Option<Termination> {
        let last = self.trace.last()?;
        if last.successive_diff < self.cfg.tolerance {
            Some(Termination::Converged)
        } else if diverging(&self.trace) {
            Some(Termination::Diverged)
        } else {
            None
        }
    }
}

fn norm_inf(v: &[Scalar], ctx: &PrecisionContext) -> Scalar {
    v.iter()
        .map(Scalar::abs)
        .fold(ctx.zero(), |a, b| if b > a { b } else { a })
}

/// Successive approximation: `u^(k+1)_0 = g(t_0)`,
/// `u^(k+1)_i = g(t_i) + ∫₀^{t_i} K(t_i, s, ũ^(k)(s)) ds`.
pub fn picard_solve(
    problem: &ProblemSpec,
    grid: &Arc<Grid>,
    u0: &SolutionVector,
    cfg: &SolverConfig,
) -> Result<SolveResult, SolveError> {
    let mut run = Run::start(problem, grid, u0, cfg, Scheme::Picard)?;
    let ctx = cfg.precision;
    let mut u: Vec<Scalar> = u0.values().iter().map(|v| v.round_to(&ctx)).collect();
    // the map of the current iterate doubles as the next iterate
    let mut next = match run.disc.picard_map(&u) {
        Ok(v) => v,
        Err(e) if is_blow_up(&e, &run.ceiling) => return Ok(run.finish(u, Termination::Diverged)),
        Err(e) => return Err(run.quad_failure(0, e)),
    };
    for k in 0..cfg.max_iter {
        let started = Instant::now();
        let u_new = next;
        if any_exceeds(&u_new, &run.ceiling) {
            return Ok(run.finish(u, Termination::Diverged));
        }
        let diff = sup_norm_diff_values(&u_new, &u)?;
        next = match run.disc.picard_map(&u_new) {
            Ok(v) => v,
            Err(e) if is_blow_up(&e, &run.ceiling) => {
                return Ok(run.finish(u, Termination::Diverged))
            }
            Err(e) => return Err(run.quad_failure(k, e)),
        };
        let residual_norm = sup_norm_diff_values(&u_new, &next)?;
        run.record(&u_new, diff, residual_norm, started);
        u = u_new;
        if let Some(t) = run.verdict() {
            return Ok(run.finish(u, t));
        }
    }
    Ok(run.finish(u, Termination::MaxIterations))
}

/// Newton–Kantorovich: solve `A(u^(k))·δ = −F(u^(k))`, set
/// `u^(k+1) = u^(k) + δ`. The trace records `‖δ‖_∞` as the successive
/// difference.
pub fn newton_solve(
    problem: &ProblemSpec,
    grid: &Arc<Grid>,
    u0: &SolutionVector,
    cfg: &SolverConfig,
) -> Result<SolveResult, SolveError> {
    let mut run = Run::start(problem, grid, u0, cfg, Scheme::Newton)?;
    let ctx = cfg.precision;
    let mut u: Vec<Scalar> = u0.values().iter().map(|v| v.round_to(&ctx)).collect();
    let mut r = match run.disc.residual(&u) {
        Ok(v) => v,
        Err(e) if is_blow_up(&e, &run.ceiling) => return Ok(run.finish(u, Termination::Diverged)),
        Err(e) => return Err(run.quad_failure(0, e)),
    };
    for k in 0..cfg.max_iter {
        let started = Instant::now();
        let a = match run.disc.frechet_matrix(&u) {
            Ok(a) => a,
            Err(e) if is_blow_up(&e, &run.ceiling) => {
                return Ok(run.finish(u, Termination::Diverged))
            }
            Err(e) => return Err(run.quad_failure(k, e)),
        };
        let neg_r: Vec<Scalar> = r.iter().map(|v| -v).collect();
        let step = solve_linear(&a, &neg_r, &ctx).map_err(|source| SolveError::Singular {
            iteration: k,
            source,
            trace: Box::new(run.trace.clone()),
        })?;
        let delta = step.solution;
        if any_exceeds(&delta, &run.ceiling) {
            return Ok(run.finish(u, Termination::Diverged));
        }
        let mut u_new: Vec<Scalar> = u.iter().zip(&delta).map(|(a, d)| a + d).collect();
        u_new[0] = run.disc.forcing()[0].clone();
        let r_new = match run.disc.residual(&u_new) {
            Ok(v) => v,
            Err(e) if is_blow_up(&e, &run.ceiling) => {
                return Ok(run.finish(u, Termination::Diverged))
            }
            Err(e) => return Err(run.quad_failure(k, e)),
        };
        run.record(
            &u_new,
            norm_inf(&delta, &ctx),
            norm_inf(&r_new, &ctx),
            started,
        );
        u = u_new;
        r = r_new;
        if let Some(t) = run.verdict() {
            return Ok(run.finish(u, t));
        }
    }
    Ok(run.finish(u, Termination::MaxIterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::uniform_grid;
    use crate::kernels::{bratu_kernel, linear_kernel, KernelSpec};

    fn ctx() -> PrecisionContext {
        PrecisionContext::new(50).unwrap()
    }

    fn grid(t_end: &str, step: &str) -> Arc<Grid> {
        let c = ctx();
        Arc::new(uniform_grid(&c.parse(t_end).unwrap(), &c.parse(step).unwrap(), &c).unwrap())
    }

    fn linear(t_end: i64) -> ProblemSpec {
        let c = ctx();
        linear_kernel(&c.one(), &c.one(), &c.from_int(t_end)).unwrap()
    }

    fn bratu(lambda: &str, t_end: i64) -> ProblemSpec {
        let c = ctx();
        bratu_kernel(
            &c.parse(lambda).unwrap(),
            &c.zero(),
            &c.zero(),
            &c.from_int(t_end),
        )
        .unwrap()
    }

    fn zero_kernel() -> ProblemSpec {
        let c = ctx();
        let g: crate::kernels::TimeFn = Arc::new(|t: &Scalar| t.cos());
        ProblemSpec::new(KernelSpec::zero(&c), g, c.from_int(2)).unwrap()
    }

    fn cfg(scheme: Scheme) -> SolverConfig {
        SolverConfig::new(ctx()).with_scheme(scheme)
    }

    fn ones(g: &Arc<Grid>) -> SolutionVector {
        SolutionVector::constant(g.clone(), &ctx().one())
    }

    /// For `K = u`, `g ≡ 1` the scheme is the trapezoid rule applied to
    /// `u' = u`, whose iterates are `((1 + h/2)/(1 − h/2))^i`.
    fn trapezoid_oracle(g: &Grid, h: &Scalar) -> Vec<Scalar> {
        let c = ctx();
        let half = h / &c.from_int(2);
        let r = (c.one() + &half) / (c.one() - &half);
        (0..g.len()).map(|i| r.powi(i as i32)).collect()
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("picard".parse::<Scheme>().unwrap(), Scheme::Picard);
        assert_eq!("newton".parse::<Scheme>().unwrap(), Scheme::Newton);
        assert!("broyden".parse::<Scheme>().is_err());
        assert_eq!(Scheme::default(), Scheme::Newton);
    }

    #[test]
    fn config_validation() {
        let c = ctx();
        assert!(cfg(Scheme::Newton).validate().is_ok());
        assert!(cfg(Scheme::Newton)
            .with_tolerance(c.zero())
            .validate()
            .is_err());
        assert!(cfg(Scheme::Newton)
            .with_tolerance(c.pow10(-49))
            .validate()
            .is_err());
        assert!(cfg(Scheme::Newton).with_max_iter(0).validate().is_err());
    }

    #[test]
    fn scheme_mismatch_is_a_config_error() {
        let g = grid("2", "0.1");
        let err = picard_solve(&linear(2), &g, &ones(&g), &cfg(Scheme::Newton)).unwrap_err();
        assert!(matches!(err, SolveError::Config(_)));
    }

    #[test]
    fn grid_past_horizon_is_rejected() {
        let g = grid("3", "0.5");
        let err = solve(&linear(2), &g, None, &cfg(Scheme::Newton)).unwrap_err();
        assert!(matches!(err, SolveError::Config(_)));
    }

    #[test]
    fn zero_kernel_residual_and_matrix() {
        let c = ctx();
        let g = grid("2", "0.5");
        let p = zero_kernel();
        let u = ones(&g);
        let rule = QuadratureRule::tanh_sinh(&c);
        let r = residual(&p, &g, &u, &rule).unwrap();
        for (t, ri) in g.nodes().iter().zip(r.values()) {
            assert!((ri - &(c.one() - t.cos())).abs() < c.pow10(-48));
        }
        let a = assemble_frechet_matrix(&p, &g, &u, &rule).unwrap();
        assert_eq!(a, DenseMatrix::identity(g.len(), &c));
    }

    #[test]
    fn linear_kernel_matrix_uses_hat_areas() {
        let c = ctx();
        let g = grid("2", "0.5");
        let rule = QuadratureRule::tanh_sinh(&c);
        let a = assemble_frechet_matrix(&linear(2), &g, &ones(&g), &rule).unwrap();
        let h = c.ratio(1, 2);
        let half_h = c.ratio(1, 4);
        let tol = c.pow10(-44);
        // row 3 integrates over [0, t_3]: phi_0 and phi_3 contribute half hats
        assert!((&a[(3, 0)] + &half_h).abs() < tol);
        assert!((&a[(3, 1)] + &h).abs() < tol);
        assert!((&a[(3, 2)] + &h).abs() < tol);
        assert!((&a[(3, 3)] - &(c.one() - &half_h)).abs() < tol);
        assert!(a[(3, 4)].is_zero());
        for j in 0..g.len() {
            let expected = if j == 0 { c.one() } else { c.zero() };
            assert_eq!(a[(0, j)], expected);
        }
    }

    #[test]
    fn bratu_matrix_by_hand() {
        let c = ctx();
        let g = Arc::new(Grid::new(vec![c.zero(), c.one()], &c).unwrap());
        let p = bratu("1", 1);
        let u = SolutionVector::constant(g.clone(), &c.zero());
        let a = assemble_frechet_matrix(&p, &g, &u, &QuadratureRule::tanh_sinh(&c)).unwrap();
        let tol = c.pow10(-44);
        assert!((&a[(1, 0)] - &c.ratio(1, 3)).abs() < tol);
        assert!((&a[(1, 1)] - &c.ratio(7, 6)).abs() < tol);
    }

    #[test]
    fn frechet_matrix_matches_directional_difference() {
        let c = ctx();
        let g = grid("1", "0.25");
        let p = bratu("1", 1);
        let rule = QuadratureRule::tanh_sinh(&c);
        let u = SolutionVector::from_fn(g.clone(), |t| t * &c.ratio(-1, 3));
        let v: Vec<Scalar> = (0..g.len()).map(|k| c.ratio(k as i64 % 3 - 1, 2)).collect();
        let a = assemble_frechet_matrix(&p, &g, &u, &rule).unwrap();
        let av = a.mul_vec(&v).unwrap();
        let r0 = residual(&p, &g, &u, &rule).unwrap();
        let mut errors = Vec::new();
        for e in [-10, -15] {
            let eps = c.pow10(e);
            let shifted: Vec<Scalar> = u
                .values()
                .iter()
                .zip(&v)
                .map(|(ui, vi)| ui + &(&eps * vi))
                .collect();
            let shifted = SolutionVector::new(g.clone(), shifted).unwrap();
            let r1 = residual(&p, &g, &shifted, &rule).unwrap();
            let fd: Vec<Scalar> = r1
                .values()
                .iter()
                .zip(r0.values())
                .map(|(a, b)| (a - b) / &eps)
                .collect();
            errors.push(sup_norm_diff_values(&fd, &av).unwrap());
        }
        assert!(errors[0] < c.pow10(-8), "{}", errors[0]);
        assert!(
            errors[1] < &errors[0] * &c.pow10(-3),
            "{} vs {}",
            errors[1],
            errors[0]
        );
    }

    #[test]
    fn zero_kernel_newton_is_exact_in_one_step() {
        let c = ctx();
        let g = grid("2", "0.1");
        let p = zero_kernel();
        let res = newton_solve(&p, &g, &ones(&g), &cfg(Scheme::Newton)).unwrap();
        assert!(res.converged);
        let after_one = &res.trace.records()[1].successive_diff;
        assert!(*after_one < c.pow10(-44));
        for (t, u) in g.nodes().iter().zip(res.solution.values()) {
            assert!((u - &t.cos()).abs() < c.pow10(-48));
        }
    }

    #[test]
    fn linear_kernel_hits_the_trapezoid_oracle() {
        let c = ctx();
        let g = grid("2", "0.1");
        let oracle = trapezoid_oracle(&g, &c.parse("0.1").unwrap());
        for scheme in [Scheme::Newton, Scheme::Picard] {
            let cfg = cfg(scheme).with_max_iter(100);
            let res = solve(&linear(2), &g, Some(&ones(&g)), &cfg).unwrap();
            assert!(res.converged, "{scheme}");
            let err = sup_norm_diff_values(res.solution.values(), &oracle).unwrap();
            assert!(err < c.pow10(-40), "{scheme}: {err}");
        }
    }

    #[test]
    fn linear_kernel_newton_step_is_affine_exact() {
        let c = ctx();
        let g = grid("2", "0.1");
        let res = newton_solve(&linear(2), &g, &ones(&g), &cfg(Scheme::Newton)).unwrap();
        let qtol = QuadratureRule::tanh_sinh(&c).tolerance(&c);
        assert!(res.trace.records()[1].successive_diff < &qtol * &c.from_int(10));
        assert_eq!(res.iterations_used, 2);
    }

    #[test]
    fn bratu_matches_analytic_solution() {
        let c = ctx();
        let g = grid("1", "0.05");
        let p = bratu("1", 1);
        let res = solve(&p, &g, None, &cfg(Scheme::Newton)).unwrap();
        assert!(res.converged);
        let exact: Vec<Scalar> = g.nodes().iter().map(|t| p.exact(t).unwrap()).collect();
        let err = sup_norm_diff_values(res.solution.values(), &exact).unwrap();
        assert!(err < c.pow10(-3), "{err}");
        let oracle = res.trace.last().unwrap().oracle_error.clone().unwrap();
        assert_eq!(oracle, err);
    }

    #[test]
    fn schemes_agree_and_pin_the_boundary() {
        let c = ctx();
        let g = grid("1", "0.1");
        let p = bratu("1", 1);
        let u0 = SolutionVector::constant(g.clone(), &c.from_int(3));
        let newton = newton_solve(&p, &g, &u0, &cfg(Scheme::Newton)).unwrap();
        let picard = picard_solve(&p, &g, &u0, &cfg(Scheme::Picard).with_max_iter(200)).unwrap();
        assert!(newton.converged && picard.converged);
        assert!(newton.solution.values()[0].is_zero());
        assert!(picard.solution.values()[0].is_zero());
        let gap = crate::grid::sup_norm_diff(&newton.solution, &picard.solution).unwrap();
        assert!(
            gap < &cfg(Scheme::Newton).tolerance * &c.from_int(10),
            "{gap}"
        );
    }

    #[test]
    fn every_iterate_is_pinned() {
        let c = ctx();
        let g = grid("1", "0.25");
        let p = bratu("2", 1);
        let u0 = SolutionVector::constant(g.clone(), &c.ratio(3, 2));
        for scheme in [Scheme::Newton, Scheme::Picard] {
            for iters in 1..4 {
                let res = solve(&p, &g, Some(&u0), &cfg(scheme).with_max_iter(iters)).unwrap();
                assert!(res.solution.values()[0].is_zero(), "{scheme} after {iters}");
            }
        }
    }

    #[test]
    fn picard_tail_is_strictly_decreasing() {
        let c = ctx();
        let g = grid("2", "0.1");
        let p = bratu("1", 2);
        let u0 = SolutionVector::constant(g.clone(), &c.one());
        let res = picard_solve(&p, &g, &u0, &cfg(Scheme::Picard).with_max_iter(200)).unwrap();
        assert!(res.converged);
        let diffs = res.trace.successive_diffs();
        for w in diffs[1..].windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn newton_quadratic_ratios_are_bounded() {
        let g = grid("2", "0.1");
        let p = bratu("1", 2);
        let res =
            newton_solve(&p, &g, &default_initial_guess(&p, &g), &cfg(Scheme::Newton)).unwrap();
        assert!(res.converged);
        let floor = res.trace.noise_floor().clone();
        let diffs: Vec<f64> = res
            .trace
            .successive_diffs()
            .into_iter()
            .take_while(|d| *d > floor)
            .map(|d| d.to_f64())
            .collect();
        assert!(diffs.len() >= 4, "{diffs:?}");
        let ratios: Vec<f64> = diffs.windows(2).map(|w| w[1] / (w[0] * w[0])).collect();
        assert!(ratios.iter().all(|r| *r < 10.0), "{ratios:?}");
    }

    #[test]
    fn max_iterations_reported() {
        let g = grid("1", "0.1");
        let res = solve(
            &bratu("1", 1),
            &g,
            None,
            &cfg(Scheme::Picard).with_max_iter(2),
        )
        .unwrap();
        assert!(!res.converged);
        assert_eq!(res.termination, Termination::MaxIterations);
        assert_eq!(res.iterations_used, 2);
    }

    #[test]
    fn divergence_rule() {
        let c = ctx();
        let grow: Vec<Scalar> = [1, 2, 5, 20].iter().map(|&k| c.from_int(k)).collect();
        assert!(diverging(&IterationTrace::from_diffs(&grow, c.zero())));
        let slow: Vec<Scalar> = [1, 2, 3, 4].iter().map(|&k| c.from_int(k)).collect();
        assert!(!diverging(&IterationTrace::from_diffs(&slow, c.zero())));
        let dip: Vec<Scalar> = [1, 50, 40, 400].iter().map(|&k| c.from_int(k)).collect();
        assert!(!diverging(&IterationTrace::from_diffs(&dip, c.zero())));
    }

    #[test]
    fn supercritical_bratu_diverges() {
        let c = ctx();
        let g = grid("4", "0.1");
        let p = bratu_kernel(&c.from_int(-8), &c.zero(), &c.zero(), &c.from_int(4)).unwrap();
        let picard = solve(&p, &g, None, &cfg(Scheme::Picard).with_max_iter(200)).unwrap();
        assert!(!picard.converged);
        assert_eq!(picard.termination, Termination::Diverged);
        // Newton either blows up or leaves the region where the Jacobian is invertible
        match solve(&p, &g, None, &cfg(Scheme::Newton).with_max_iter(200)) {
            Ok(res) => assert_eq!(res.termination, Termination::Diverged),
            Err(SolveError::Singular { trace, .. }) => assert!(!trace.is_empty()),
            Err(other) => panic!("unexpected failure: {other}"),
        }
    }
}
