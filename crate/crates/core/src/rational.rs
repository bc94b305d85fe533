//! Exact rational scalars and their textual form.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::{Error, Result};

/// Arbitrary-precision rational number used by every exact computation.
pub type Rational = num_rational::BigRational;

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Parses `"p/q"`, `"p"` or a finite decimal such as `"-0.5"`.
pub fn parse(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational: {s:?}"));
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(p, q));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = whole.starts_with('-');
        let whole_digits = whole.trim_start_matches(['-', '+']);
        let digits = format!("{}{}", if whole_digits.is_empty() { "0" } else { whole_digits }, frac);
        let mut num: BigInt = digits.parse().map_err(|_| bad())?;
        if negative {
            num = -num;
        }
        let den = num_traits::pow(BigInt::from(10), frac.len());
        return Ok(Rational::new(num, den));
    }
    let p: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(p))
}

/// Renders as `"p/q"`, always with an explicit denominator.
pub fn to_string(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Integer power with a possibly negative exponent.
pub fn pow(base: &Rational, exp: i32) -> Rational {
    if exp == 0 {
        return Rational::one();
    }
    let p = num_traits::pow(base.clone(), exp.unsigned_abs() as usize);
    if exp < 0 {
        p.recip()
    } else {
        p
    }
}

/// Decimal rendering with 12 significant digits.
pub fn format_f64(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{:.*e}", 11, x);
    let v: f64 = s.parse().unwrap_or(x);
    if v.abs() < 1e-6 || v.abs() >= 1e16 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn abs(r: &Rational) -> Rational {
    r.abs()
}

/// A JSON number, or a string accepted by [`parse`].
pub fn from_json(v: &serde_json::Value) -> Result<Rational> {
    match v {
        serde_json::Value::Number(n) => parse(&n.to_string())
            .or_else(|_| n.as_f64().and_then(from_f64).ok_or_else(|| Error::Parse(format!("bad number {n}")))),
        serde_json::Value::String(s) => parse(s),
        other => Err(Error::Parse(format!("expected a number, got {other}"))),
    }
}

/// Converts a float to the exact rational it represents.
pub fn from_f64(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

/// A machine-word rational that records overflow instead of wrapping.
///
/// Every operation is exact or yields the overflowed state, which then
/// propagates; [`CheckedRational::to_rational`] returns `None` for it. This
/// is an exact, much faster stand-in for [`Rational`] when values stay small.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckedRational(Option<num_rational::Ratio<i128>>);

impl CheckedRational {
    pub const OVERFLOW: Self = CheckedRational(None);

    pub fn new(num: i128, den: i128) -> Self {
        if den == 0 {
            return Self::OVERFLOW;
        }
        CheckedRational(Some(num_rational::Ratio::new(num, den)))
    }

    /// `None` if the value does not fit in `i128` numerator and denominator.
    pub fn from_rational(r: &Rational) -> Self {
        match (r.numer().to_i128(), r.denom().to_i128()) {
            (Some(n), Some(d)) => CheckedRational(Some(num_rational::Ratio::new_raw(n, d))),
            _ => Self::OVERFLOW,
        }
    }

    pub fn to_rational(&self) -> Option<Rational> {
        self.0.map(|r| Rational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom())))
    }

    pub fn overflowed(&self) -> bool {
        self.0.is_none()
    }

    fn zip(
        self,
        rhs: Self,
        op: impl FnOnce(&num_rational::Ratio<i128>, &num_rational::Ratio<i128>) -> Option<num_rational::Ratio<i128>>,
    ) -> Self {
        match (self.0, rhs.0) {
            (Some(a), Some(b)) => CheckedRational(op(&a, &b)),
            _ => Self::OVERFLOW,
        }
    }
}

impl std::ops::Add for CheckedRational {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.zip(rhs, num_traits::CheckedAdd::checked_add)
    }
}

impl std::ops::Sub for CheckedRational {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.zip(rhs, num_traits::CheckedSub::checked_sub)
    }
}

impl std::ops::Mul for CheckedRational {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.zip(rhs, num_traits::CheckedMul::checked_mul)
    }
}

impl std::ops::Neg for CheckedRational {
    type Output = Self;
    fn neg(self) -> Self {
        Self::zero() - self
    }
}

impl Zero for CheckedRational {
    fn zero() -> Self {
        CheckedRational(Some(num_rational::Ratio::from_integer(0)))
    }
    fn is_zero(&self) -> bool {
        self.0.is_some_and(|r| r.is_zero())
    }
}

impl One for CheckedRational {
    fn one() -> Self {
        CheckedRational(Some(num_rational::Ratio::from_integer(1)))
    }
}
