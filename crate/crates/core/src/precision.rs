//! Arbitrary-precision scalars and the precision context they are created under.
//!
//! Every real number in the solver is a [`Scalar`], a thin wrapper around an
//! MPFR float. A [`PrecisionContext`] fixes the number of significant decimal
//! digits a computation carries; it is passed explicitly to constructors and
//! never stored as process-wide state.
//!
//! Binary operations between scalars of different precision produce a result
//! at the larger of the two precisions.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rug::float::Constant;
use rug::Float;
use thiserror::Error;

/// Working precision used when nothing else is requested.
pub const DEFAULT_DIGITS: u32 = 50;
/// Lowest accepted working precision (double-precision equivalent).
pub const MIN_DIGITS: u32 = 15;
/// Extra digits carried internally by quadrature and linear algebra.
pub const GUARD_DIGITS: u32 = 10;

const LOG2_10: f64 = std::f64::consts::LOG2_10;
const LOG10_2: f64 = std::f64::consts::LOG10_2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrecisionError {
    #[error("working precision must be at least {MIN_DIGITS} decimal digits, got {0}")]
    TooFewDigits(u32),
    #[error("invalid decimal {text:?}: unexpected character at position {position}")]
    Parse { text: String, position: usize },
    #[error("exp({0}) overflows the representable exponent range")]
    Overflow(String),
    #[error("{op} is undefined at {arg}")]
    Domain { op: &'static str, arg: String },
}

/// Number of significant decimal digits carried by arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrecisionContext {
    digits: u32,
}

impl Default for PrecisionContext {
    fn default() -> Self {
        PrecisionContext {
            digits: DEFAULT_DIGITS,
        }
    }
}

impl PrecisionContext {
    pub fn new(digits: u32) -> Result<Self, PrecisionError> {
        if digits < MIN_DIGITS {
            return Err(PrecisionError::TooFewDigits(digits));
        }
        Ok(PrecisionContext { digits })
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    /// Binary mantissa width. One spare decimal digit is included so that any
    /// decimal string of `digits` significant digits survives a round trip.
    pub fn bits(&self) -> u32 {
        ((self.digits + 1) as f64 * LOG2_10).ceil() as u32
    }

    /// The context used internally by quadrature and linear algebra.
    pub fn with_guard(&self) -> PrecisionContext {
        PrecisionContext {
            digits: self.digits + GUARD_DIGITS,
        }
    }

    pub fn zero(&self) -> Scalar {
        Scalar(Float::with_val(self.bits(), 0))
    }

    pub fn one(&self) -> Scalar {
        Scalar(Float::with_val(self.bits(), 1))
    }

    pub fn from_int(&self, value: i64) -> Scalar {
        Scalar(Float::with_val(self.bits(), value))
    }

    /// Exact conversion from a machine double.
    pub fn from_f64(&self, value: f64) -> Scalar {
        Scalar(Float::with_val(self.bits(), value))
    }

    /// `numerator / denominator`, correctly rounded.
    pub fn ratio(&self, numerator: i64, denominator: i64) -> Scalar {
        let n = Float::with_val(self.bits(), numerator);
        Scalar(Float::with_val(self.bits(), n / denominator))
    }

    /// `10^exponent`, correctly rounded.
    pub fn pow10(&self, exponent: i32) -> Scalar {
        let ten = Float::with_val(self.bits(), 10);
        Scalar(Float::with_val(
            self.bits(),
            rug::ops::Pow::pow(ten, exponent),
        ))
    }

    pub fn pi(&self) -> Scalar {
        Scalar(Float::with_val(self.bits(), Constant::Pi))
    }

    /// Parses a signed decimal with optional exponent, correctly rounded to
    /// this context.
    pub fn parse(&self, text: &str) -> Result<Scalar, PrecisionError> {
        scalar_from_decimal(text, self)
    }
}

/// Returns the byte offset of the first character that breaks the grammar
/// `[+-]? (d+ ('.' d*)? | '.' d+) ([eE] [+-]? d+)?`.
fn validate_decimal(text: &str) -> Result<(), usize> {
    let bytes = text.as_bytes();
    let mut pos = 0;
    if matches!(bytes.first(), Some(b'+' | b'-')) {
        pos += 1;
    }
    let int_start = pos;
    while pos < bytes.len() && bytes[pos].is_ascii_digit() {
        pos += 1;
    }
    let mut mantissa_digits = pos - int_start;
    if pos < bytes.len() && bytes[pos] == b'.' {
        pos += 1;
        let frac_start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        mantissa_digits += pos - frac_start;
    }
    if mantissa_digits == 0 {
        return Err(pos);
    }
    if pos < bytes.len() && matches!(bytes[pos], b'e' | b'E') {
        pos += 1;
        if pos < bytes.len() && matches!(bytes[pos], b'+' | b'-') {
            pos += 1;
        }
        let exp_start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == exp_start {
            return Err(pos);
        }
    }
    if pos != bytes.len() {
        return Err(pos);
    }
    Ok(())
}

/// Parses `text` into a scalar rounded to `ctx`.
pub fn scalar_from_decimal(text: &str, ctx: &PrecisionContext) -> Result<Scalar, PrecisionError> {
    let trimmed = text.trim();
    let offset = text.len() - text.trim_start().len();
    validate_decimal(trimmed).map_err(|p| PrecisionError::Parse {
        text: text.to_string(),
        position: offset + p,
    })?;
    let body = trimmed.strip_prefix('+').unwrap_or(trimmed);
    let parsed = Float::parse(body).map_err(|_| PrecisionError::Parse {
        text: text.to_string(),
        position: offset,
    })?;
    Ok(Scalar(Float::with_val(ctx.bits(), parsed)))
}

/// `e^x`, reporting overflow as an error instead of an infinity.
pub fn scalar_exp(x: &Scalar) -> Result<Scalar, PrecisionError> {
    x.checked_exp()
}

/// An immutable arbitrary-precision real number.
#[derive(Clone)]
pub struct Scalar(Float);

impl Scalar {
    pub fn precision_bits(&self) -> u32 {
        self.0.prec()
    }

    /// Rounds (or widens) to the precision of `ctx`.
    pub fn round_to(&self, ctx: &PrecisionContext) -> Scalar {
        Scalar(Float::with_val(ctx.bits(), &self.0))
    }

    /// The integer `value` at this scalar's precision.
    pub fn int_like(&self, value: i64) -> Scalar {
        Scalar(Float::with_val(self.0.prec(), value))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }

    pub fn is_sign_negative(&self) -> bool {
        self.0.is_sign_negative()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }

    pub fn abs(&self) -> Scalar {
        Scalar(self.0.clone().abs())
    }

    /// `e^x`; saturates to +∞ past the exponent range. See [`Scalar::checked_exp`].
    pub fn exp(&self) -> Scalar {
        Scalar(self.0.clone().exp())
    }

    pub fn checked_exp(&self) -> Result<Scalar, PrecisionError> {
        let y = self.exp();
        if self.0.is_finite() && !y.0.is_finite() {
            return Err(PrecisionError::Overflow(self.to_decimal_string()));
        }
        Ok(y)
    }

    pub fn ln(&self) -> Result<Scalar, PrecisionError> {
        if self.0.is_sign_negative() || self.0.is_zero() || self.0.is_nan() {
            return Err(PrecisionError::Domain {
                op: "ln",
                arg: self.to_decimal_string(),
            });
        }
        Ok(Scalar(self.0.clone().ln()))
    }

    pub fn sqrt(&self) -> Result<Scalar, PrecisionError> {
        if (self.0.is_sign_negative() && !self.0.is_zero()) || self.0.is_nan() {
            return Err(PrecisionError::Domain {
                op: "sqrt",
                arg: self.to_decimal_string(),
            });
        }
        Ok(Scalar(self.0.clone().sqrt()))
    }

    pub fn cosh(&self) -> Scalar {
        Scalar(self.0.clone().cosh())
    }

    pub fn sinh(&self) -> Scalar {
        Scalar(self.0.clone().sinh())
    }

    pub fn cos(&self) -> Scalar {
        Scalar(self.0.clone().cos())
    }

    pub fn powi(&self, n: i32) -> Scalar {
        Scalar(Float::with_val(
            self.0.prec(),
            rug::ops::Pow::pow(&self.0, n),
        ))
    }

    /// Rounds to the nearest integer, returning `None` beyond ±2^53.
    pub fn round_to_i64(&self) -> Option<i64> {
        let r = self.0.clone().round().to_f64();
        (r.is_finite() && r.abs() <= 9_007_199_254_740_992.0).then_some(r as i64)
    }

    pub fn max<'a>(&'a self, other: &'a Scalar) -> &'a Scalar {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn min<'a>(&'a self, other: &'a Scalar) -> &'a Scalar {
        if other < self {
            other
        } else {
            self
        }
    }

    /// Shortest decimal string that parses back to exactly this value at its
    /// own precision. Scientific notation (lowercase `e`) is used when the
    /// decimal exponent is at least 6 in magnitude.
    pub fn to_decimal_string(&self) -> String {
        if self.0.is_nan() {
            return "nan".into();
        }
        if self.0.is_infinite() {
            return if self.0.is_sign_negative() {
                "-inf"
            } else {
                "inf"
            }
            .into();
        }
        if self.0.is_zero() {
            return "0".into();
        }
        let prec = self.0.prec();
        let round_trips = |n: usize| -> Option<String> {
            let (neg, digits, exp) = self.0.to_sign_string_exp(10, Some(n));
            let text = format_decimal(neg, &digits, exp.unwrap_or(0));
            let back = Float::parse(&text).ok()?;
            (Float::with_val(prec, back) == self.0).then_some(text)
        };
        // The set of digit counts that round-trip is upward closed, so a
        // bisection finds the shortest one.
        let mut hi = (prec as f64 * LOG10_2).ceil() as usize + 2;
        let mut best = match round_trips(hi) {
            Some(s) => s,
            None => {
                let (neg, digits, exp) = self.0.to_sign_string_exp(10, None);
                return format_decimal(neg, &digits, exp.unwrap_or(0));
            }
        };
        let mut lo = 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            match round_trips(mid) {
                Some(s) => {
                    best = s;
                    hi = mid;
                }
                None => lo = mid + 1,
            }
        }
        best
    }
}

/// Formats `0.digits × 10^exp` per the serialization rules.
fn format_decimal(negative: bool, digits: &str, exp: i32) -> String {
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    let sci_exp = exp as i64 - 1;
    let mut out = String::with_capacity(digits.len() + 8);
    if negative {
        out.push('-');
    }
    if sci_exp.abs() >= 6 {
        out.push_str(&digits[..1]);
        if digits.len() > 1 {
            out.push('.');
            out.push_str(&digits[1..]);
        }
        out.push('e');
        out.push_str(&sci_exp.to_string());
    } else if sci_exp >= 0 {
        let int_len = sci_exp as usize + 1;
        if digits.len() <= int_len {
            out.push_str(digits);
            out.extend(std::iter::repeat_n('0', int_len - digits.len()));
        } else {
            out.push_str(&digits[..int_len]);
            out.push('.');
            out.push_str(&digits[int_len..]);
        }
    } else {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-sci_exp - 1) as usize));
        out.push_str(digits);
    }
    out
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal_string())
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", self.to_decimal_string())
    }
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Scalar) -> bool {
        self.0 == other.0
    }
}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Scalar) -> Option<Ordering> {
        self.0.partial_cmp(&other.0)
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0.clone())
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $assign_trait:ident, $assign_method:ident, $op:tt) => {
        impl $trait<&Scalar> for &Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                let prec = self.0.prec().max(rhs.0.prec());
                Scalar(Float::with_val(prec, &self.0 $op &rhs.0))
            }
        }

        impl $trait<&Scalar> for Scalar {
            type Output = Scalar;
            fn $method(mut self, rhs: &Scalar) -> Scalar {
                if self.0.prec() >= rhs.0.prec() {
                    $assign_trait::$assign_method(&mut self.0, &rhs.0);
                    self
                } else {
                    (&self).$method(rhs)
                }
            }
        }

        impl $trait<Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                self.$method(&rhs)
            }
        }

        impl $trait<Scalar> for &Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                self.$method(&rhs)
            }
        }

        impl $assign_trait<&Scalar> for Scalar {
            fn $assign_method(&mut self, rhs: &Scalar) {
                if self.0.prec() >= rhs.0.prec() {
                    $assign_trait::$assign_method(&mut self.0, &rhs.0);
                } else {
                    *self = (&*self).$method(rhs);
                }
            }
        }

        impl $assign_trait<Scalar> for Scalar {
            fn $assign_method(&mut self, rhs: Scalar) {
                $assign_trait::$assign_method(self, &rhs);
            }
        }
    };
}

binop!(Add, add, AddAssign, add_assign, +);
binop!(Sub, sub, SubAssign, sub_assign, -);
binop!(Mul, mul, MulAssign, mul_assign, *);
binop!(Div, div, DivAssign, div_assign, /);

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx50() -> PrecisionContext {
        PrecisionContext::new(50).unwrap()
    }

    #[test]
    fn rejects_low_precision() {
        assert_eq!(
            PrecisionContext::new(14),
            Err(PrecisionError::TooFewDigits(14))
        );
        assert_eq!(PrecisionContext::default().digits(), 50);
    }

    #[test]
    fn parses_exact_values() {
        let ctx = ctx50();
        assert_eq!(ctx.parse("1.5").unwrap(), ctx.ratio(3, 2));
        assert!(ctx.parse("0").unwrap().is_zero());
        assert_eq!(ctx.parse("-2.5e3").unwrap(), ctx.from_int(-2500));
        assert_eq!(ctx.parse("+.25").unwrap(), ctx.ratio(1, 4));
        assert_eq!(ctx.parse("7.").unwrap(), ctx.from_int(7));
        assert_eq!(ctx.parse("1E-2").unwrap(), ctx.parse("0.01").unwrap());
    }

    #[test]
    fn parse_errors_name_position() {
        let ctx = ctx50();
        let cases = [
            ("1.2.3", 3),
            ("abc", 0),
            ("", 0),
            ("-", 1),
            ("1e", 2),
            ("1e+x", 3),
            ("12x4", 2),
            (".", 1),
        ];
        for (text, position) in cases {
            match ctx.parse(text) {
                Err(PrecisionError::Parse { position: p, .. }) => {
                    assert_eq!(p, position, "{text:?}")
                }
                other => panic!("{text:?} parsed as {other:?}"),
            }
        }
    }

    #[test]
    fn serialization_round_trips_short_decimals() {
        let ctx = ctx50();
        for text in [
            "0.1", "1.5", "2", "-0.003", "123456.7", "1e-7", "2.5e6", "-1e20",
        ] {
            assert_eq!(ctx.parse(text).unwrap().to_decimal_string(), text);
        }
        assert_eq!(ctx.zero().to_decimal_string(), "0");
        assert_eq!(ctx.parse("0.000001").unwrap().to_decimal_string(), "1e-6");
        assert_eq!(ctx.parse("0.00001").unwrap().to_decimal_string(), "0.00001");
        assert_eq!(ctx.parse("999999").unwrap().to_decimal_string(), "999999");
        assert_eq!(ctx.parse("1000000").unwrap().to_decimal_string(), "1e6");
    }

    #[test]
    fn computed_values_print_enough_digits() {
        let ctx = ctx50();
        let third = ctx.ratio(1, 3);
        let text = third.to_decimal_string();
        assert!(text.len() >= 52, "{text}");
        assert_eq!(ctx.parse(&text).unwrap(), third);
    }

    /// Independent oracle: Taylor series of e^x summed with basic arithmetic.
    fn exp_series(x: &Scalar, ctx: &PrecisionContext) -> Scalar {
        let mut term = ctx.one();
        let mut sum = ctx.one();
        let eps = ctx.pow10(-(ctx.digits() as i32) - 5);
        let mut n = 1;
        while term.abs() > eps {
            term = term * x / &ctx.from_int(n);
            sum += &term;
            n += 1;
        }
        sum
    }

    #[test]
    fn exp_matches_series_oracle() {
        let ctx = ctx50();
        let ctx60 = PrecisionContext::new(60).unwrap();
        assert_eq!(ctx.zero().exp(), ctx.one());
        let e = ctx.one().checked_exp().unwrap();
        let oracle = exp_series(&ctx60.one(), &ctx60);
        let rel = ((&e - &oracle) / &oracle).abs();
        assert!(rel <= ctx.pow10(1 - 50), "{rel}");
        assert!(e
            .to_decimal_string()
            .starts_with("2.718281828459045235360287471352662497757247093699"));
        for text in ["-3.25", "0.001", "7.5", "-0.5"] {
            let x = ctx.parse(text).unwrap();
            let oracle = exp_series(&x.round_to(&ctx60), &ctx60);
            let rel = ((x.exp() - &oracle) / &oracle).abs();
            assert!(rel <= ctx.pow10(1 - 50), "{text}: {rel}");
        }
    }

    #[test]
    fn exp_ln_inverse() {
        let ctx = ctx50();
        let two = ctx.from_int(2);
        let back = two.ln().unwrap().exp();
        assert!((back - &two).abs() < ctx.pow10(-49));
    }

    #[test]
    fn exp_overflow_is_reported() {
        let ctx = ctx50();
        let huge = ctx.parse("1e30").unwrap();
        assert!(matches!(
            scalar_exp(&huge),
            Err(PrecisionError::Overflow(_))
        ));
        assert!(!huge.exp().is_finite());
    }

    #[test]
    fn domain_errors() {
        let ctx = ctx50();
        assert!(ctx.zero().ln().is_err());
        assert!(ctx.from_int(-1).ln().is_err());
        assert!(ctx.from_int(-1).sqrt().is_err());
        assert!(ctx.zero().sqrt().unwrap().is_zero());
    }

    #[test]
    fn mixed_precision_widens() {
        let lo = PrecisionContext::new(20).unwrap();
        let hi = PrecisionContext::new(60).unwrap();
        let a = lo.one();
        let b = hi.ratio(1, 3);
        assert_eq!((&a + &b).precision_bits(), hi.bits());
        assert_eq!((a.clone() + &b).precision_bits(), hi.bits());
        let mut c = a;
        c *= &b;
        assert_eq!(c.precision_bits(), hi.bits());
    }

    #[test]
    fn cosh_and_sqrt() {
        let ctx = ctx50();
        let x = ctx.parse("0.7").unwrap();
        let expected = (x.exp() + (-&x).exp()) / ctx.from_int(2);
        assert!((x.cosh() - expected).abs() < ctx.pow10(-49));
        let two = ctx.from_int(2);
        let r = two.sqrt().unwrap();
        assert!((&r * &r - &two).abs() < ctx.pow10(-49));
    }

    fn arb_scalar(ctx: PrecisionContext) -> impl Strategy<Value = Scalar> {
        (any::<bool>(), 1u64..u64::MAX, -60i32..60).prop_map(move |(neg, m, e)| {
            let text = format!("{}{}e{}", if neg { "-" } else { "" }, m, e);
            ctx.parse(&text).unwrap()
        })
    }

    proptest! {
        #[test]
        fn add_then_subtract_recovers(
            x in arb_scalar(PrecisionContext::new(50).unwrap()),
            y in arb_scalar(PrecisionContext::new(50).unwrap()),
        ) {
            let ctx = PrecisionContext::new(50).unwrap();
            let back = (&x + &y) - &y;
            let scale = x.abs().max(&y.abs()).clone();
            prop_assert!((back - &x).abs() <= scale * ctx.pow10(-48));
        }

        #[test]
        fn decimal_round_trip(x in arb_scalar(PrecisionContext::new(50).unwrap())) {
            let ctx = PrecisionContext::new(50).unwrap();
            let text = x.to_decimal_string();
            prop_assert_eq!(ctx.parse(&text).unwrap(), x);
        }

        #[test]
        fn short_decimals_print_identically(
            neg in any::<bool>(),
            mantissa in (1u64..10_000_000_000).prop_filter("no trailing zero", |m| m % 10 != 0),
            exp in -20i32..20,
        ) {
            let ctx = PrecisionContext::new(50).unwrap();
            let x = ctx.parse(&format!("{}{}e{}", if neg { "-" } else { "" }, mantissa, exp)).unwrap();
            let printed = x.to_decimal_string();
            prop_assert_eq!(ctx.parse(&printed).unwrap(), x);
            let significand = printed.trim_start_matches('-').split('e').next().unwrap().replace('.', "");
            prop_assert_eq!(significand.trim_start_matches('0'), mantissa.to_string());
        }
    }
}
