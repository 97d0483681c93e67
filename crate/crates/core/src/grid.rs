//! Discretization grids `0 = t₀ < ⋯ < t_N = T` and nodal solution vectors.

use std::cmp::Ordering;
use std::sync::Arc;

use thiserror::Error;

use crate::precision::{PrecisionContext, Scalar};

/// Grids with more nodes than this are rejected as a configuration error.
pub const MAX_NODES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("grid configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Strictly increasing time nodes starting at zero.
///
/// Nodes are stored explicitly, so a non-uniform grid is only a different
/// constructor call.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<Scalar>,
    ctx: PrecisionContext,
}

impl Grid {
    pub fn new(nodes: Vec<Scalar>, ctx: &PrecisionContext) -> Result<Grid, GridError> {
        if nodes.len() < 2 {
            return Err(GridError::Config(format!(
                "a grid needs at least 2 nodes, got {}",
                nodes.len()
            )));
        }
        if !nodes[0].is_zero() {
            return Err(GridError::Config(format!(
                "first node must be 0, got {}",
                nodes[0]
            )));
        }
        let nodes: Vec<Scalar> = nodes.iter().map(|t| t.round_to(ctx)).collect();
        if let Some(k) = nodes
            .windows(2)
            .position(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less))
        {
            return Err(GridError::Config(format!(
                "nodes must be strictly increasing: t[{}] = {} >= t[{}] = {}",
                k,
                nodes[k],
                k + 1,
                nodes[k + 1]
            )));
        }
        Ok(Grid { nodes, ctx: *ctx })
    }

    /// Uniform grid on `[0, t_end]`; see [`uniform_grid`].
    pub fn uniform(
        t_end: &Scalar,
        step: &Scalar,
        ctx: &PrecisionContext,
    ) -> Result<Grid, GridError> {
        let zero = ctx.zero();
        if *t_end <= zero || *step <= zero {
            return Err(GridError::Config(format!(
                "t_end and step must be positive (t_end = {t_end}, step = {step})"
            )));
        }
        let work = ctx.with_guard();
        let ratio = t_end.round_to(&work) / step.round_to(&work);
        let segments = ratio
            .round_to_i64()
            .filter(|&m| m >= 1 && (m as usize) < MAX_NODES)
            .ok_or_else(|| {
                GridError::Config(format!(
                    "t_end / step = {ratio} does not give a usable node count"
                ))
            })?;
        let fuzz = work.pow10(-10);
        if (&ratio - &work.from_int(segments)).abs() > fuzz {
            return Err(GridError::Config(format!(
                "step {step} does not divide t_end {t_end} (ratio {:.12})",
                ratio.to_f64()
            )));
        }
        let mut nodes: Vec<Scalar> = (0..segments)
            .map(|k| (step * &ctx.from_int(k)).round_to(ctx))
            .collect();
        nodes.push(t_end.round_to(ctx));
        Grid::new(nodes, ctx)
    }

    pub fn nodes(&self) -> &[Scalar] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Scalar {
        &self.nodes[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of the final node, `N`.
    pub fn last_index(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn t_end(&self) -> &Scalar {
        &self.nodes[self.nodes.len() - 1]
    }

    pub fn context(&self) -> &PrecisionContext {
        &self.ctx
    }

    pub fn same_nodes(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other) || self.nodes == other.nodes
    }
}

/// `{0, step, 2·step, …, t_end}`. The final node is `t_end` itself, never an
/// accumulated product, and `t_end / step` must be within `1e-10` of an
/// integer.
pub fn uniform_grid(
    t_end: &Scalar,
    step: &Scalar,
    ctx: &PrecisionContext,
) -> Result<Grid, GridError> {
    Grid::uniform(t_end, step, ctx)
}

/// Nodal values paired with the grid they live on.
#[derive(Debug, Clone)]
pub struct SolutionVector {
    grid: Arc<Grid>,
    values: Vec<Scalar>,
}

impl SolutionVector {
    pub fn new(grid: Arc<Grid>, values: Vec<Scalar>) -> Result<SolutionVector, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Shape(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(SolutionVector { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, value: &Scalar) -> SolutionVector {
        let ctx = *grid.context();
        let values = vec![value.round_to(&ctx); grid.len()];
        SolutionVector { grid, values }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&Scalar) -> Scalar) -> SolutionVector {
        let values = grid.nodes().iter().map(f).collect();
        SolutionVector { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Scalar] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Scalar> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn check_same_grid(&self, other: &SolutionVector) -> Result<(), GridError> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_nodes(&other.grid) {
            Ok(())
        } else {
            Err(GridError::Shape(
                "solution vectors live on different grids".into(),
            ))
        }
    }
}

/// `max_i |a_i − b_i|` over a shared grid.
pub fn sup_norm_diff(a: &SolutionVector, b: &SolutionVector) -> Result<Scalar, GridError> {
    a.check_same_grid(b)?;
    sup_norm_diff_values(a.values(), b.values())
}

/// `max_i |a_i − b_i|` for raw nodal slices (possibly at different
/// precisions; the difference is taken at the wider one).
pub fn sup_norm_diff_values(a: &[Scalar], b: &[Scalar]) -> Result<Scalar, GridError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(GridError::Shape(format!(
            "cannot compare vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut best = (&a[0] - &b[0]).abs();
    for (x, y) in a.iter().zip(b).skip(1) {
        let d = (x - y).abs();
        if d > best {
            best = d;
        }
    }
    Ok(best)
}
