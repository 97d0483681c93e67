//! High-precision quadrature on finite intervals.
//!
//! Two rules are available:
//!
//! * **tanh-sinh** (the default): the substitution `x = tanh(π/2 · sinh t)`
//!   followed by the trapezoid rule in `t`. Each refinement level halves the
//!   step and reuses every abscissa of the previous level.
//! * **composite Gauss–Legendre**: an `n`-point rule on `2^level` equal panels.
//!
//! For both rules the error is estimated from the difference of the last two
//! levels, and a result is accepted once that difference is at most
//! `10^(−target_digits)·(1 + |result|)`. All sums run at the ambient
//! precision plus [`GUARD_DIGITS`](crate::precision::GUARD_DIGITS); the
//! public entry points round back to the ambient precision.

use std::cmp::Ordering;
use std::sync::OnceLock;

use thiserror::Error;

use crate::grid::Grid;
use crate::precision::{PrecisionContext, Scalar};

/// Headroom between working precision and the default quadrature target.
pub const TARGET_HEADROOM: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    TanhSinh,
    GaussLegendre { points: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureRule {
    pub kind: RuleKind,
    pub target_digits: u32,
    pub max_refinement_level: u32,
}

impl QuadratureRule {
    pub const DEFAULT_GAUSS_POINTS: usize = 20;

    pub fn default_target_digits(ctx: &PrecisionContext) -> u32 {
        ctx.digits() - TARGET_HEADROOM
    }

    pub fn tanh_sinh(ctx: &PrecisionContext) -> QuadratureRule {
        QuadratureRule {
            kind: RuleKind::TanhSinh,
            target_digits: Self::default_target_digits(ctx),
            max_refinement_level: 8,
        }
    }

    pub fn gauss_legendre(points: usize, ctx: &PrecisionContext) -> QuadratureRule {
        QuadratureRule {
            kind: RuleKind::GaussLegendre { points },
            target_digits: Self::default_target_digits(ctx),
            max_refinement_level: 10,
        }
    }

    /// Same kind and refinement budget, retargeted at `ctx`'s default.
    pub fn retargeted(&self, ctx: &PrecisionContext) -> QuadratureRule {
        QuadratureRule {
            target_digits: Self::default_target_digits(ctx),
            ..*self
        }
    }

    pub fn validate(&self, ctx: &PrecisionContext) -> Result<(), QuadError> {
        if self.target_digits == 0 || self.target_digits > ctx.digits() {
            return Err(QuadError::Config(format!(
                "target_digits must lie in 1..={}, got {}",
                ctx.digits(),
                self.target_digits
            )));
        }
        if self.max_refinement_level == 0 || self.max_refinement_level > 16 {
            return Err(QuadError::Config(format!(
                "max_refinement_level must lie in 1..=16, got {}",
                self.max_refinement_level
            )));
        }
        if let RuleKind::GaussLegendre { points } = self.kind {
            if points == 0 || points > 512 {
                return Err(QuadError::Config(format!(
                    "Gauss-Legendre point count must lie in 1..=512, got {points}"
                )));
            }
        }
        Ok(())
    }

    /// `10^(−target_digits)` at `ctx`.
    pub fn tolerance(&self, ctx: &PrecisionContext) -> Scalar {
        ctx.pow10(-(self.target_digits as i32))
    }
}

#[derive(Debug, Clone, Error)]
pub enum QuadError {
    #[error(
        "quadrature missed 1e-{target_digits} after {levels} refinement levels: \
         best estimate {estimate}, error estimate {error}"
    )]
    Accuracy {
        estimate: Scalar,
        error: Scalar,
        target_digits: u32,
        levels: u32,
    },
    #[error("integrand is not finite at s = {at}")]
    NonFinite { at: String },
    #[error("invalid quadrature rule: {0}")]
    Config(String),
    #[error("invalid integration range: {0}")]
    Range(String),
}

/// Raw result at the integrator's working precision.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub value: Scalar,
    pub error: Scalar,
    pub evaluations: usize,
    pub level: u32,
}

#[derive(Debug)]
struct TanhSinhNode {
    complement: Scalar,
    weight: Scalar,
    center: bool,
}

#[derive(Debug)]
enum Tables {
    TanhSinh(Vec<OnceLock<Vec<TanhSinhNode>>>),
    Gauss(Vec<(Scalar, Scalar)>),
}

/// A quadrature rule bound to a precision, with its abscissae and weights
/// precomputed. Cheap to share across threads.
#[derive(Debug)]
pub struct Integrator {
    rule: QuadratureRule,
    ambient: PrecisionContext,
    work: PrecisionContext,
    tol: Scalar,
    tables: Tables,
}

impl Integrator {
    pub fn new(rule: &QuadratureRule, ctx: &PrecisionContext) -> Result<Integrator, QuadError> {
        rule.validate(ctx)?;
        let work = ctx.with_guard();
        let tables = match rule.kind {
            RuleKind::TanhSinh => Tables::TanhSinh(
                (0..=rule.max_refinement_level)
                    .map(|_| OnceLock::new())
                    .collect(),
            ),
            RuleKind::GaussLegendre { points } => {
                Tables::Gauss(gauss_legendre_nodes(points, &work))
            }
        };
        Ok(Integrator {
            rule: *rule,
            ambient: *ctx,
            work,
            tol: rule.tolerance(&work),
            tables,
        })
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn context(&self) -> &PrecisionContext {
        &self.ambient
    }

    pub fn work_context(&self) -> &PrecisionContext {
        &self.work
    }

    /// `∫_lower^upper f`, rounded to the ambient precision.
    pub fn integrate<F>(&self, f: F, lower: &Scalar, upper: &Scalar) -> Result<Scalar, QuadError>
    where
        F: Fn(&Scalar) -> Scalar,
    {
        Ok(self
            .integrate_estimate(f, lower, upper)?
            .value
            .round_to(&self.ambient))
    }

    pub fn integrate_estimate<F>(
        &self,
        f: F,
        lower: &Scalar,
        upper: &Scalar,
    ) -> Result<Estimate, QuadError>
    where
        F: Fn(&Scalar) -> Scalar,
    {
        let mut out = self.integrate_many(1, |s, buf| buf[0] = f(s), lower, upper)?;
        Ok(out.swap_remove(0))
    }

    /// Integrates a vector-valued integrand; every component is evaluated at
    /// the same abscissae and must meet the tolerance on its own.
    pub fn integrate_many<F>(
        &self,
        dims: usize,
        f: F,
        lower: &Scalar,
        upper: &Scalar,
    ) -> Result<Vec<Estimate>, QuadError>
    where
        F: Fn(&Scalar, &mut [Scalar]),
    {
        if !matches!(
            lower.partial_cmp(upper),
            Some(Ordering::Less | Ordering::Equal)
        ) {
            return Err(QuadError::Range(format!(
                "lower bound {lower} exceeds upper bound {upper}"
            )));
        }
        let lo = lower.round_to(&self.work);
        let hi = upper.round_to(&self.work);
        if lo == hi {
            return Ok((0..dims)
                .map(|_| Estimate {
                    value: self.work.zero(),
                    error: self.work.zero(),
                    evaluations: 0,
                    level: 0,
                })
                .collect());
        }
        match &self.tables {
            Tables::TanhSinh(levels) => self.tanh_sinh(levels, dims, &f, &lo, &hi),
            Tables::Gauss(nodes) => self.gauss(nodes, dims, &f, &lo, &hi),
        }
    }

    /// Sum of the integrals over the grid segments `[t_k, t_{k+1}]`, `k <
    /// upper_node`, rounded to the ambient precision.
    pub fn integrate_piecewise<F>(
        &self,
        f: F,
        grid: &Grid,
        upper_node: usize,
    ) -> Result<Scalar, QuadError>
    where
        F: Fn(&Scalar) -> Scalar,
    {
        Ok(self
            .integrate_segments(|_, s| f(s), grid, upper_node)?
            .round_to(&self.ambient))
    }

    /// Like [`Integrator::integrate_piecewise`] but hands the segment index to
    /// the integrand and returns the unrounded working-precision sum.
    pub fn integrate_segments<F>(
        &self,
        f: F,
        grid: &Grid,
        upper_node: usize,
    ) -> Result<Scalar, QuadError>
    where
        F: Fn(usize, &Scalar) -> Scalar,
    {
        if upper_node > grid.last_index() {
            return Err(QuadError::Range(format!(
                "upper node {upper_node} beyond last grid index {}",
                grid.last_index()
            )));
        }
        let mut total = self.work.zero();
        for k in 0..upper_node {
            let est = self.integrate_estimate(|s| f(k, s), grid.node(k), grid.node(k + 1))?;
            total += &est.value;
        }
        Ok(total)
    }

    fn check_converged(&self, current: &[Scalar], previous: &[Scalar]) -> (bool, Scalar) {
        let one = self.work.one();
        let mut worst = self.work.zero();
        let mut ok = true;
        for (c, p) in current.iter().zip(previous) {
            let diff = (c - p).abs();
            if diff > &self.tol * &(&one + &c.abs()) {
                ok = false;
            }
            if diff > worst {
                worst = diff;
            }
        }
        (ok, worst)
    }

    fn eval_into<F>(&self, f: &F, x: &Scalar, buf: &mut [Scalar]) -> Result<(), QuadError>
    where
        F: Fn(&Scalar, &mut [Scalar]),
    {
        f(x, buf);
        if buf.iter().any(|v| !v.is_finite()) {
            return Err(QuadError::NonFinite {
                at: x.to_decimal_string(),
            });
        }
        Ok(())
    }

    fn accuracy_error(&self, best: &[Scalar], error: Scalar) -> QuadError {
        QuadError::Accuracy {
            estimate: best[0].round_to(&self.ambient),
            error: error.round_to(&self.ambient),
            target_digits: self.rule.target_digits,
            levels: self.rule.max_refinement_level,
        }
    }

    fn tanh_sinh<F>(
        &self,
        levels: &[OnceLock<Vec<TanhSinhNode>>],
        dims: usize,
        f: &F,
        lo: &Scalar,
        hi: &Scalar,
    ) -> Result<Vec<Estimate>, QuadError>
    where
        F: Fn(&Scalar, &mut [Scalar]),
    {
        const MIN_LEVEL: u32 = 2;
        let two = self.work.from_int(2);
        let half = (hi - lo) / &two;
        let center = (lo + hi) / &two;
        let mut sums = vec![self.work.zero(); dims];
        let mut buf = vec![self.work.zero(); dims];
        let mut buf2 = vec![self.work.zero(); dims];
        let mut previous: Option<Vec<Scalar>> = None;
        let mut evaluations = 0;
        let mut last_error = self.work.zero();
        for (level, slot) in levels.iter().enumerate() {
            let level = level as u32;
            let nodes = slot.get_or_init(|| tanh_sinh_level(level, &self.work));
            for node in nodes {
                if node.center {
                    self.eval_into(f, &center, &mut buf)?;
                    evaluations += 1;
                    for (s, v) in sums.iter_mut().zip(&buf) {
                        *s += &(&node.weight * v);
                    }
                } else {
                    let offset = &half * &node.complement;
                    self.eval_into(f, &(lo + &offset), &mut buf)?;
                    self.eval_into(f, &(hi - &offset), &mut buf2)?;
                    evaluations += 2;
                    for ((s, a), b) in sums.iter_mut().zip(&buf).zip(&buf2) {
                        *s += &(&node.weight * &(a + b));
                    }
                }
            }
            let scale = &half / &self.work.from_int(1i64 << level);
            let current: Vec<Scalar> = sums.iter().map(|s| s * &scale).collect();
            if let Some(prev) = &previous {
                let (ok, err) = self.check_converged(&current, prev);
                last_error = err;
                if ok && level >= MIN_LEVEL {
                    return Ok(finish(current, prev, evaluations, level));
                }
            }
            previous = Some(current);
        }
        Err(self.accuracy_error(&previous.unwrap_or_default(), last_error))
    }

    fn gauss<F>(
        &self,
        nodes: &[(Scalar, Scalar)],
        dims: usize,
        f: &F,
        lo: &Scalar,
        hi: &Scalar,
    ) -> Result<Vec<Estimate>, QuadError>
    where
        F: Fn(&Scalar, &mut [Scalar]),
    {
        let mut buf = vec![self.work.zero(); dims];
        let mut previous: Option<Vec<Scalar>> = None;
        let mut evaluations = 0;
        let mut last_error = self.work.zero();
        let two = self.work.from_int(2);
        for level in 0..=self.rule.max_refinement_level {
            let panels = 1i64 << level;
            let width = (hi - lo) / &self.work.from_int(panels);
            let radius = &width / &two;
            let mut sums = vec![self.work.zero(); dims];
            for p in 0..panels {
                let mid = lo + &(&width * &self.work.from_int(p)) + &radius;
                for (x, w) in nodes {
                    let s = &mid + &(&radius * x);
                    self.eval_into(f, &s, &mut buf)?;
                    evaluations += 1;
                    for (acc, v) in sums.iter_mut().zip(&buf) {
                        *acc += &(w * v);
                    }
                }
            }
            let current: Vec<Scalar> = sums.iter().map(|s| s * &radius).collect();
            if let Some(prev) = &previous {
                let (ok, err) = self.check_converged(&current, prev);
                last_error = err;
                if ok {
                    return Ok(finish(current, prev, evaluations, level));
                }
            }
            previous = Some(current);
        }
        Err(self.accuracy_error(&previous.unwrap_or_default(), last_error))
    }
}

fn finish(
    current: Vec<Scalar>,
    previous: &[Scalar],
    evaluations: usize,
    level: u32,
) -> Vec<Estimate> {
    current
        .into_iter()
        .zip(previous)
        .map(|(value, p)| Estimate {
            error: (&value - p).abs(),
            value,
            evaluations,
            level,
        })
        .collect()
}

/// Abscissae introduced at `level` (step `2^-level`; odd multiples only past
/// level 0), truncated once the weight drops below `10^-(digits+5)`.
fn tanh_sinh_level(level: u32, work: &PrecisionContext) -> Vec<TanhSinhNode> {
    let half_pi = work.pi() / &work.from_int(2);
    let one = work.one();
    let two = work.from_int(2);
    let cutoff = work.pow10(-(work.digits() as i32) - 5);
    let denom = work.from_int(1i64 << level);
    let mut nodes = Vec::new();
    if level == 0 {
        nodes.push(TanhSinhNode {
            complement: one.clone(),
            weight: half_pi.clone(),
            center: true,
        });
    }
    let (start, stride) = if level == 0 { (1, 1) } else { (1, 2) };
    let mut k: i64 = start;
    loop {
        let t = work.from_int(k) / &denom;
        let u = &half_pi * &t.sinh();
        let cosh_u = u.cosh();
        let weight = &half_pi * &t.cosh() / &(&cosh_u * &cosh_u);
        if weight < cutoff {
            break;
        }
        // 1 − tanh(u) without cancellation
        let complement = &two / &(&one + &(&two * &u).exp());
        nodes.push(TanhSinhNode {
            complement,
            weight,
            center: false,
        });
        k += stride;
    }
    nodes
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`, by
/// Newton iteration on `P_n`.
fn gauss_legendre_nodes(n: usize, work: &PrecisionContext) -> Vec<(Scalar, Scalar)> {
    let one = work.one();
    let two = work.from_int(2);
    let pi = work.pi();
    let eps = work.pow10(-(work.digits() as i32) - 2);
    let nf = work.from_int(n as i64);
    let legendre = |x: &Scalar| -> (Scalar, Scalar) {
        // returns (P_n(x), P_n'(x))
        let mut p_prev = one.clone();
        let mut p = x.clone();
        if n == 0 {
            return (one.clone(), work.zero());
        }
        for k in 2..=n as i64 {
            let kf = work.from_int(k);
            let next =
                (&work.from_int(2 * k - 1) * x * &p - &(&work.from_int(k - 1) * &p_prev)) / &kf;
            p_prev = p;
            p = next;
        }
        let dp = &nf * &(x * &p - &p_prev) / &(x * x - &one);
        (p, dp)
    };
    let mut nodes = Vec::with_capacity(n);
    for i in 1..=n {
        let guess = &pi * &work.from_f64(i as f64 - 0.25) / &work.from_f64(n as f64 + 0.5);
        let mut x = guess.cos();
        for _ in 0..200 {
            let (p, dp) = legendre(&x);
            let dx = p / &dp;
            x -= &dx;
            if dx.abs() < eps {
                break;
            }
        }
        let (_, dp) = legendre(&x);
        let w = &two / &((&one - &(&x * &x)) * &dp * &dp);
        nodes.push((x, w));
    }
    nodes
}

/// `∫_lower^upper f` under `rule` at precision `ctx`.
pub fn integrate<F>(
    f: F,
    lower: &Scalar,
    upper: &Scalar,
    rule: &QuadratureRule,
    ctx: &PrecisionContext,
) -> Result<Scalar, QuadError>
where
    F: Fn(&Scalar) -> Scalar,
{
    Integrator::new(rule, ctx)?.integrate(f, lower, upper)
}

/// Sum of segment integrals over `[t_0, t_upper_node]`, at the grid's precision.
pub fn integrate_piecewise<F>(
    f: F,
    grid: &Grid,
    upper_node: usize,
    rule: &QuadratureRule,
) -> Result<Scalar, QuadError>
where
    F: Fn(&Scalar) -> Scalar,
{
    Integrator::new(rule, grid.context())?.integrate_piecewise(f, grid, upper_node)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::uniform_grid;
    use crate::interp::interp;
    use proptest::prelude::*;

    fn ctx() -> PrecisionContext {
        PrecisionContext::new(50).unwrap()
    }

    fn rules(c: &PrecisionContext) -> [QuadratureRule; 2] {
        [
            QuadratureRule::tanh_sinh(c),
            QuadratureRule::gauss_legendre(QuadratureRule::DEFAULT_GAUSS_POINTS, c),
        ]
    }

    fn close(a: &Scalar, b: &Scalar, digits: i32) -> bool {
        let c = ctx();
        (a - b).abs() <= c.pow10(-digits) * (c.one() + b.abs())
    }

    #[test]
    fn constant_and_linear_integrands() {
        let c = ctx();
        for rule in rules(&c) {
            let two = integrate(|_| c.one(), &c.zero(), &c.from_int(2), &rule, &c).unwrap();
            assert!(close(&two, &c.from_int(2), 45), "{rule:?}: {two}");
            let half = integrate(|s| s.clone(), &c.zero(), &c.one(), &rule, &c).unwrap();
            assert!(close(&half, &c.ratio(1, 2), 45), "{rule:?}: {half}");
        }
    }

    #[test]
    fn exponential_matches_antiderivative() {
        let c = ctx();
        let expected = c.one().exp() - c.one();
        for rule in rules(&c) {
            let got = integrate(|s| s.exp(), &c.zero(), &c.one(), &rule, &c).unwrap();
            assert!(
                close(&got, &expected, rule.target_digits as i32),
                "{rule:?}: {got}"
            );
        }
    }

    #[test]
    fn empty_and_reversed_ranges() {
        let c = ctx();
        let rule = QuadratureRule::tanh_sinh(&c);
        assert!(integrate(|s| s.exp(), &c.one(), &c.one(), &rule, &c)
            .unwrap()
            .is_zero());
        assert!(matches!(
            integrate(|s| s.exp(), &c.one(), &c.zero(), &rule, &c),
            Err(QuadError::Range(_))
        ));
    }

    #[test]
    fn rule_validation() {
        let c = ctx();
        let mut rule = QuadratureRule::tanh_sinh(&c);
        rule.target_digits = 51;
        assert!(matches!(rule.validate(&c), Err(QuadError::Config(_))));
        let gl = QuadratureRule::gauss_legendre(0, &c);
        assert!(gl.validate(&c).is_err());
        assert_eq!(QuadratureRule::tanh_sinh(&c).target_digits, 45);
    }

    #[test]
    fn non_convergence_reports_best_estimate() {
        let c = ctx();
        let mut rule = QuadratureRule::gauss_legendre(2, &c);
        rule.max_refinement_level = 2;
        let err = integrate(|s| s.exp(), &c.zero(), &c.one(), &rule, &c).unwrap_err();
        match err {
            QuadError::Accuracy {
                estimate, error, ..
            } => {
                assert!(close(&estimate, &(c.one().exp() - c.one()), 3));
                assert!(error > c.zero());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_integrand_is_an_error() {
        let c = ctx();
        let rule = QuadratureRule::tanh_sinh(&c);
        let huge = c.parse("1e40").unwrap();
        let err = integrate(|s| (s * &huge).exp(), &c.zero(), &c.one(), &rule, &c).unwrap_err();
        assert!(matches!(err, QuadError::NonFinite { .. }));
    }

    #[test]
    fn piecewise_examples() {
        let c = ctx();
        let rule = QuadratureRule::tanh_sinh(&c);
        let g = uniform_grid(&c.from_int(2), &c.parse("0.1").unwrap(), &c).unwrap();
        assert!(integrate_piecewise(|_| c.one(), &g, 0, &rule)
            .unwrap()
            .is_zero());
        let two = integrate_piecewise(|_| c.one(), &g, 20, &rule).unwrap();
        assert!(close(&two, &c.from_int(2), 45));
        assert!(integrate_piecewise(|_| c.one(), &g, 21, &rule).is_err());

        let g3 = Grid::new(vec![c.zero(), c.one(), c.from_int(2)], &c).unwrap();
        let vals = [c.zero(), c.one(), c.from_int(2)];
        let area = integrate_piecewise(|s| interp(s, &g3, &vals).unwrap(), &g3, 2, &rule).unwrap();
        assert!(close(&area, &c.from_int(2), 45), "{area}");
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let c = ctx();
        for n in [1usize, 3, 5, 8] {
            let rule = QuadratureRule::gauss_legendre(n, &c);
            let integrator = Integrator::new(&rule, &c).unwrap();
            let Tables::Gauss(nodes) = &integrator.tables else {
                unreachable!()
            };
            let work = integrator.work_context();
            for degree in 0..(2 * n as i32) {
                // single panel, no refinement: Σ w x^d = ∫_{-1}^{1} x^d
                let sum = nodes
                    .iter()
                    .fold(work.zero(), |acc, (x, w)| acc + &(w * &x.powi(degree)));
                let exact = if degree % 2 == 1 {
                    work.zero()
                } else {
                    work.ratio(2, degree as i64 + 1)
                };
                assert!(
                    (sum - &exact).abs() < work.pow10(-50),
                    "n={n} degree={degree}"
                );
            }
        }
    }

    #[test]
    fn vector_integrand_matches_scalar_runs() {
        let c = ctx();
        let integrator = Integrator::new(&QuadratureRule::tanh_sinh(&c), &c).unwrap();
        let (a, b) = (c.zero(), c.ratio(1, 10));
        let many = integrator
            .integrate_many(
                2,
                |s, buf| {
                    buf[0] = s.exp();
                    buf[1] = s * &s.exp();
                },
                &a,
                &b,
            )
            .unwrap();
        let first = integrator.integrate(|s| s.exp(), &a, &b).unwrap();
        let second = integrator.integrate(|s| s * &s.exp(), &a, &b).unwrap();
        assert!(close(&many[0].value, &first, 48));
        assert!(close(&many[1].value, &second, 48));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn positive_integrand_gives_positive_integral(k in 1i64..50, shift in -20i64..20) {
            let c = ctx();
            let rule = QuadratureRule::tanh_sinh(&c);
            let (k, shift) = (c.ratio(k, 10), c.from_int(shift));
            let value = integrate(|s| (&k * s + &shift).exp(), &c.zero(), &c.from_int(2), &rule, &c).unwrap();
            prop_assert!(value > c.zero());
        }

        #[test]
        fn integrals_are_additive(a in 0i64..100, db in 1i64..100, dc in 1i64..100) {
            let c = ctx();
            let rule = QuadratureRule::tanh_sinh(&c);
            let a = c.ratio(a, 50);
            let b = &a + &c.ratio(db, 50);
            let cc = &b + &c.ratio(dc, 50);
            let f = |s: &Scalar| (s * s).cosh();
            let whole = integrate(f, &a, &cc, &rule, &c).unwrap();
            let parts = integrate(f, &a, &b, &rule, &c).unwrap() + integrate(f, &b, &cc, &rule, &c).unwrap();
            prop_assert!(close(&whole, &parts, 44));
        }

        #[test]
        fn rules_agree_on_smooth_integrands(p in 1i64..30, q in 1i64..30) {
            let c = ctx();
            let [ts, gl] = rules(&c);
            let (p, q) = (c.ratio(p, 10), c.ratio(q, 7));
            let f = |s: &Scalar| (&p * s).exp() / &(&q + &(s * s));
            let hi = c.ratio(3, 2);
            let a = integrate(f, &c.zero(), &hi, &ts, &c).unwrap();
            let b = integrate(f, &c.zero(), &hi, &gl, &c).unwrap();
            prop_assert!(close(&a, &b, ts.target_digits as i32));
        }
    }
}
