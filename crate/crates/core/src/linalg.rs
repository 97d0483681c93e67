//! Dense arbitrary-precision matrices and Gaussian elimination with partial
//! pivoting.

use std::cmp::Ordering;
use std::ops::{Index, IndexMut};

use thiserror::Error;

use crate::precision::{PrecisionContext, Scalar};

#[derive(Debug, Clone, Error)]
pub enum LinalgError {
    #[error("matrix is singular to working precision: pivot {pivot} in column {column}")]
    Singular { column: usize, pivot: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Scalar>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize, ctx: &PrecisionContext) -> DenseMatrix {
        DenseMatrix {
            rows,
            cols,
            entries: vec![ctx.zero(); rows * cols],
        }
    }

    pub fn identity(n: usize, ctx: &PrecisionContext) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(n, n, ctx);
        for i in 0..n {
            m[(i, i)] = ctx.one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Scalar>>) -> Result<DenseMatrix, LinalgError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if n_rows == 0 || n_cols == 0 {
            return Err(LinalgError::Shape("matrix must be non-empty".into()));
        }
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(LinalgError::Shape("ragged rows".into()));
        }
        Ok(DenseMatrix {
            rows: n_rows,
            cols: n_cols,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[Scalar] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Scalar] {
        &mut self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[Scalar]) -> Result<Vec<Scalar>, LinalgError> {
        if x.len() != self.cols {
            return Err(LinalgError::Shape(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                let row = self.row(i);
                let mut acc = &row[0] * &x[0];
                for (a, b) in row.iter().zip(x).skip(1) {
                    acc += &(a * b);
                }
                acc
            })
            .collect())
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> Scalar {
        (0..self.rows)
            .map(|i| {
                let row = self.row(i);
                row.iter()
                    .skip(1)
                    .fold(row[0].abs(), |acc, v| acc + &v.abs())
            })
            .reduce(|a, b| if b > a { b } else { a })
            .expect("matrix is non-empty")
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = Scalar;
    fn index(&self, (i, j): (usize, usize)) -> &Scalar {
        &self.entries[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Scalar {
        &mut self.entries[i * self.cols + j]
    }
}

#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub solution: Vec<Scalar>,
    /// `‖A·x − rhs‖_∞` for the returned (rounded) `x`.
    pub residual_norm: Scalar,
}

fn vec_norm_inf(v: &[Scalar], ctx: &PrecisionContext) -> Scalar {
    v.iter()
        .map(Scalar::abs)
        .fold(ctx.zero(), |a, b| if b > a { b } else { a })
}

/// Solves `A·x = rhs` by Gaussian elimination with row pivoting, carried out
/// at `ctx` plus guard digits. A pivot below `10^(5 − digits)·‖A‖_∞` is
/// reported as singular.
pub fn solve_linear(
    a: &DenseMatrix,
    rhs: &[Scalar],
    ctx: &PrecisionContext,
) -> Result<LinearSolution, LinalgError> {
    let n = a.rows;
    if a.cols != n {
        return Err(LinalgError::Shape(format!(
            "matrix is {}x{}, not square",
            a.rows, a.cols
        )));
    }
    if rhs.len() != n {
        return Err(LinalgError::Shape(format!(
            "right-hand side has length {}, expected {n}",
            rhs.len()
        )));
    }
    let work = ctx.with_guard();
    let threshold = &a.norm_inf() * &ctx.pow10(5 - ctx.digits() as i32);
    let mut m: Vec<Vec<Scalar>> = (0..n)
        .map(|i| a.row(i).iter().map(|v| v.round_to(&work)).collect())
        .collect();
    let mut b: Vec<Scalar> = rhs.iter().map(|v| v.round_to(&work)).collect();

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&p, &q| {
                m[p][col]
                    .abs()
                    .partial_cmp(&m[q][col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("non-empty range");
        let pivot_abs = m[pivot_row][col].abs();
        if pivot_abs.partial_cmp(&threshold) != Some(Ordering::Greater) || pivot_abs.is_zero() {
            return Err(LinalgError::Singular {
                column: col,
                pivot: m[pivot_row][col].to_decimal_string(),
            });
        }
        m.swap(col, pivot_row);
        b.swap(col, pivot_row);
        let (upper, lower) = m.split_at_mut(col + 1);
        let pivot_row = &upper[col];
        for (offset, row) in lower.iter_mut().enumerate() {
            if row[col].is_zero() {
                continue;
            }
            let factor = &row[col] / &pivot_row[col];
            for j in col + 1..n {
                row[j] -= &(&factor * &pivot_row[j]);
            }
            row[col] = work.zero();
            let update = &factor * &b[col];
            b[col + 1 + offset] -= &update;
        }
    }

    let mut x = vec![work.zero(); n];
    for i in (0..n).rev() {
        let mut acc = b[i].clone();
        for j in i + 1..n {
            acc -= &(&m[i][j] * &x[j]);
        }
        x[i] = acc / &m[i][i];
    }
    let solution: Vec<Scalar> = x.iter().map(|v| v.round_to(ctx)).collect();
    let ax = a.mul_vec(
        &solution
            .iter()
            .map(|v| v.round_to(&work))
            .collect::<Vec<_>>(),
    )?;
    let diff: Vec<Scalar> = ax.iter().zip(rhs).map(|(l, r)| l - r).collect();
    Ok(LinearSolution {
        solution,
        residual_norm: vec_norm_inf(&diff, &work).round_to(ctx),
    })
}
