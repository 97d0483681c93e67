//! Arbitrary-precision solvers for nonlinear Volterra integral equations of
//! the second kind,
//!
//! ```text
//! u(t) = g(t) + ∫₀ᵗ K(t, s, u(s)) ds,   t ∈ [0, T],
//! ```
//!
//! discretized on a grid with piecewise-linear interpolation between nodes.
//! Two iteration schemes are provided: successive approximation (Picard) and
//! the Newton–Kantorovich method built from the discretized Fréchet
//! derivative `(F'(u)v)(t) = v(t) − ∫₀ᵗ ∂K/∂u(t, s, u(s)) v(s) ds`.
//! [`diagnostics`] fits empirical convergence orders to iteration traces and
//! compares solves across precision levels.

pub mod diagnostics;
pub mod grid;
pub mod interp;
pub mod kernels;
pub mod linalg;
pub mod precision;
pub mod quad;
pub mod solver;

pub use diagnostics::{estimate_rate, precision_ladder, ConvergenceEstimate, DiagnosticsError};
pub use grid::{sup_norm_diff, uniform_grid, Grid, GridError, SolutionVector};
pub use kernels::{bratu_kernel, linear_kernel, KernelRegistry, KernelSpec, ProblemSpec};
pub use precision::{PrecisionContext, PrecisionError, Scalar};
pub use quad::{QuadratureRule, RuleKind};
pub use solver::{
    newton_solve, picard_solve, solve, IterationTrace, Scheme, SolveError, SolveResult,
    SolverConfig, Termination,
};
