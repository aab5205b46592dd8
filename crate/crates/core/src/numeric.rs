//! Scalar abstractions shared by the scoring and statistics code.
//!
//! Similarity scores, background fractions and diversity metrics are generic
//! over [`Real`] (`f32` / `f64`). Quantities that must be reproduced exactly
//! (chance baselines, percentage-point deltas) use rationals.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_rational::{BigRational, Ratio};
use num_traits::{Float, FromPrimitive, Num, NumCast, ToPrimitive};

/// floating point: f32 or f64
pub trait Real: Float + FromPrimitive + NumCast + fmt::Debug + Send + Sync + 'static {}

impl Real for f32 {}
impl Real for f64 {}

/// Any ordered field-like scalar usable for averages and differences,
/// including exact rationals.
pub trait Scalar: Num + Copy + PartialOrd + FromPrimitive + fmt::Debug {}

impl<T> Scalar for T where T: Num + Copy + PartialOrd + FromPrimitive + fmt::Debug {}

/// Exact rational over machine integers, used for table percentages.
pub type Rational64 = Ratio<i64>;

/// Exact probability with arbitrary-precision denominator.
pub type Probability = Ratio<BigUint>;

/// Incremental mean. Exact for constant inputs, unlike sum-then-divide.
pub fn running_mean<T, I>(values: I) -> Option<T>
where
    T: Scalar,
    I: IntoIterator<Item = T>,
{
    let mut mean = T::zero();
    let mut count = 0usize;
    for value in values {
        count += 1;
        let k = T::from_usize(count)?;
        mean = mean + (value - mean) / k;
    }
    (count > 0).then_some(mean)
}

/// `numerator / denominator` converted into the scalar type.
pub fn ratio_of<T: Real>(numerator: usize, denominator: usize) -> Option<T> {
    if denominator == 0 {
        return None;
    }
    Some(T::from_usize(numerator)? / T::from_usize(denominator)?)
}

/// Lossy conversion of an exact probability to a float.
pub fn probability_to_f64(p: &Probability) -> f64 {
    let signed = BigRational::new(p.numer().clone().into(), p.denom().clone().into());
    signed.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid decimal literal: {0:?}")]
pub struct DecimalParseError(pub String);

/// A decimal literal such as `74.6` or `-8.9`, held exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Decimal(pub Rational64);

impl Decimal {
    pub fn value(self) -> Rational64 {
        self.0
    }

    /// Render with a fixed number of fractional digits and an explicit sign.
    pub fn signed(self, digits: usize) -> String {
        let sign = if self.0 < Rational64::from_integer(0) { '-' } else { '+' };
        format!("{sign}{}", format_abs(self.0, digits))
    }
}

impl std::ops::Sub for Decimal {
    type Output = Decimal;

    fn sub(self, rhs: Decimal) -> Decimal {
        Decimal(self.0 - rhs.0)
    }
}

impl From<Rational64> for Decimal {
    fn from(value: Rational64) -> Self {
        Decimal(value)
    }
}

impl FromStr for Decimal {
    type Err = DecimalParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || DecimalParseError(s.to_string());
        let t = s.trim();
        let (negative, body) = match t.strip_prefix('-').or_else(|| t.strip_prefix('\u{2212}')) {
            Some(rest) => (true, rest),
            None => (false, t.strip_prefix('+').unwrap_or(t)),
        };
        let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(err());
        }
        if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        if frac_part.len() > 12 {
            return Err(err());
        }
        let digits = format!("{int_part}{frac_part}");
        let numer: i64 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| err())? };
        let denom = 10i64.pow(frac_part.len() as u32);
        let value = Rational64::new(if negative { -numer } else { numer }, denom);
        Ok(Decimal(value))
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = f.precision().unwrap_or(1);
        let sign = if self.0 < Rational64::from_integer(0) { "-" } else { "" };
        write!(f, "{sign}{}", format_abs(self.0, digits))
    }
}

fn format_abs(value: Rational64, digits: usize) -> String {
    let scale = 10i64.pow(digits as u32);
    let scaled = (value * Rational64::from_integer(scale)).round();
    let n = scaled.to_integer().unsigned_abs();
    let scale = scale as u64;
    if digits == 0 {
        n.to_string()
    } else {
        format!("{}.{:0width$}", n / scale, n % scale, width = digits)
    }
}
