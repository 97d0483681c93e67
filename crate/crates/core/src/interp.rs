//! Piecewise-linear interpolation of nodal values and the matching hat basis.
//!
//! Evaluation points outside `[t₀, t_N]` are rejected; points within
//! `10^(5 − digits)` of an endpoint are clamped onto it, since quadrature
//! abscissae can land a rounding error outside the interval.

use thiserror::Error;

use crate::grid::{Grid, SolutionVector};
use crate::precision::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpError {
    #[error("refusing to extrapolate: x = {x} lies outside [{lower}, {upper}]")]
    Extrapolation {
        x: String,
        lower: String,
        upper: String,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

fn endpoint_fuzz(grid: &Grid) -> Scalar {
    let ctx = grid.context();
    ctx.pow10(5 - ctx.digits() as i32)
}

/// Index `i` of the segment `[t_i, t_{i+1}]` containing `x`. Interior nodes
/// belong to the segment on their left.
pub fn locate_segment(x: &Scalar, grid: &Grid) -> Result<usize, InterpError> {
    let nodes = grid.nodes();
    let last = grid.last_index();
    let fuzz = endpoint_fuzz(grid);
    if *x < nodes[0] {
        if (&nodes[0] - x) > fuzz {
            return Err(extrapolation(x, grid));
        }
        return Ok(0);
    }
    if *x > nodes[last] {
        if (x - &nodes[last]) > fuzz {
            return Err(extrapolation(x, grid));
        }
        return Ok(last - 1);
    }
    let i = nodes[1..].partition_point(|t| t < x);
    Ok(i.min(last - 1))
}

fn extrapolation(x: &Scalar, grid: &Grid) -> InterpError {
    InterpError::Extrapolation {
        x: x.to_decimal_string(),
        lower: grid.node(0).to_decimal_string(),
        upper: grid.t_end().to_decimal_string(),
    }
}

/// Linear interpolation on a known segment. `x` is assumed to lie in (or a
/// rounding error outside) `[t_seg, t_{seg+1}]`; the result is clamped to the
/// range of the two endpoint values.
pub fn interp_on_segment(x: &Scalar, grid: &Grid, values: &[Scalar], seg: usize) -> Scalar {
    let (x0, x1) = (grid.node(seg), grid.node(seg + 1));
    let (f0, f1) = (&values[seg], &values[seg + 1]);
    if x <= x0 {
        return f0.clone();
    }
    if x >= x1 {
        return f1.clone();
    }
    let w = (x - x0) / (x1 - x0);
    let y = f0 + &((f1 - f0) * &w);
    let (lo, hi) = if f0 <= f1 { (f0, f1) } else { (f1, f0) };
    if y < *lo {
        lo.clone()
    } else if y > *hi {
        hi.clone()
    } else {
        y
    }
}

/// `fp[i] + (fp[i+1] − fp[i])·(x − xp[i])/(xp[i+1] − xp[i])` on the bracketing
/// segment; exactly `values[j]` when `x` is node `j`.
pub fn interp(x: &Scalar, grid: &Grid, values: &[Scalar]) -> Result<Scalar, InterpError> {
    if values.len() != grid.len() {
        return Err(InterpError::Shape(format!(
            "{} values for a grid of {} nodes",
            values.len(),
            grid.len()
        )));
    }
    let seg = locate_segment(x, grid)?;
    Ok(interp_on_segment(x, grid, values, seg))
}

impl SolutionVector {
    /// Interpolated value at `x`; see [`interp`].
    pub fn interp(&self, x: &Scalar) -> Result<Scalar, InterpError> {
        interp(x, self.grid(), self.values())
    }
}

/// Hat function `φ_j` restricted to segment `seg` (zero unless `seg` is
/// `j − 1` or `j`).
pub fn hat_on_segment(j: usize, s: &Scalar, grid: &Grid, seg: usize) -> Scalar {
    let ctx = grid.context();
    let (a, b) = (grid.node(seg), grid.node(seg + 1));
    let ramp = if j == seg + 1 {
        (s - a) / (b - a)
    } else if j == seg {
        (b - s) / (b - a)
    } else {
        return ctx.zero();
    };
    if ramp.is_sign_negative() {
        ctx.zero()
    } else if ramp > ctx.one() {
        ctx.one()
    } else {
        ramp
    }
}

/// Piecewise-linear nodal basis function `φ_j(s)`: one at `t_j`, zero at every
/// other node, supported on `[t_{j−1}, t_{j+1}]`.
pub fn hat_function(j: usize, s: &Scalar, grid: &Grid) -> Result<Scalar, InterpError> {
    if j >= grid.len() {
        return Err(InterpError::Shape(format!(
            "basis index {j} out of range for {} nodes",
            grid.len()
        )));
    }
    let seg = locate_segment(s, grid)?;
    if *s == *grid.node(j) {
        return Ok(grid.context().one());
    }
    Ok(hat_on_segment(j, s, grid, seg))
}
