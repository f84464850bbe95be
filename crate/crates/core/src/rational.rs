//! Exact rational parameters.
//!
//! Branch endpoints, hole endpoints, escape tolerances and the Lasota-Yorke
//! inputs are all carried as exact rationals so that partition alignment and
//! the reported parameters never pick up rounding. Values are accepted as
//! `p/q`, plain integers, or finite decimals (`0.0002`, `2e-4`), all of which
//! are converted exactly.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An exact rational number backed by 128-bit integers.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rational(Ratio<i128>);

impl Rational {
    pub const ZERO: Rational = Rational(Ratio::new_raw(0, 1));
    pub const ONE: Rational = Rational(Ratio::new_raw(1, 1));

    /// Builds `numer/denom`, reducing to lowest terms.
    ///
    /// Panics if `denom` is zero.
    pub fn new(numer: i128, denom: i128) -> Self {
        Rational(Ratio::new(numer, denom))
    }

    pub fn from_integer(n: i128) -> Self {
        Rational(Ratio::from_integer(n))
    }

    pub fn numer(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i128 {
        *self.0.denom()
    }

    pub fn to_f64(&self) -> f64 {
        // Ratio<i128>::to_f64 rounds correctly for values that fit.
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn floor(&self) -> i128 {
        self.0.floor().to_integer()
    }

    pub fn ceil(&self) -> i128 {
        self.0.ceil().to_integer()
    }

    pub fn recip(&self) -> Self {
        Rational(self.0.recip())
    }

    pub fn abs(&self) -> Self {
        if self.0 < Ratio::zero() {
            -*self
        } else {
            *self
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn checked_add(&self, rhs: &Self) -> Option<Self> {
        checked_binop(self, rhs, |a, b, c, d| {
            let l = b.lcm(&d);
            let x = a.checked_mul(l / b)?;
            let y = c.checked_mul(l / d)?;
            Some((x.checked_add(y)?, l))
        })
    }

    pub fn checked_sub(&self, rhs: &Self) -> Option<Self> {
        self.checked_add(&Rational(-rhs.0))
    }

    pub fn checked_mul(&self, rhs: &Self) -> Option<Self> {
        checked_binop(self, rhs, |a, b, c, d| {
            let g1 = a.gcd(&d);
            let g2 = c.gcd(&b);
            let (a, d) = if g1 > 1 { (a / g1, d / g1) } else { (a, d) };
            let (c, b) = if g2 > 1 { (c / g2, b / g2) } else { (c, b) };
            Some((a.checked_mul(c)?, b.checked_mul(d)?))
        })
    }

    pub fn checked_div(&self, rhs: &Self) -> Option<Self> {
        if rhs.0.is_zero() {
            return None;
        }
        self.checked_mul(&rhs.recip())
    }

    /// Nearest rational with denominator at most `max_denom`, via continued
    /// fractions. Used to carry float-valued configuration (e.g. a computed
    /// density) into exact bookkeeping.
    pub fn approximate(x: f64, max_denom: i128) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        let (mut p0, mut q0, mut p1, mut q1) = (0i128, 1i128, 1i128, 0i128);
        let mut v = x;
        for _ in 0..64 {
            let a = v.floor();
            if a.abs() > 1e30 {
                break;
            }
            let a = a as i128;
            let p2 = a.checked_mul(p1)?.checked_add(p0)?;
            let q2 = a.checked_mul(q1)?.checked_add(q0)?;
            if q2 > max_denom {
                break;
            }
            (p0, q0, p1, q1) = (p1, q1, p2, q2);
            let frac = v - a as f64;
            if frac.abs() < 1e-18 {
                break;
            }
            v = 1.0 / frac;
        }
        if q1 == 0 {
            return None;
        }
        Some(Rational::new(p1, q1))
    }
}

fn checked_binop(
    lhs: &Rational,
    rhs: &Rational,
    op: impl Fn(i128, i128, i128, i128) -> Option<(i128, i128)>,
) -> Option<Rational> {
    let (n, d) = op(lhs.numer(), lhs.denom(), rhs.numer(), rhs.denom())?;
    if d == 0 {
        return None;
    }
    Some(Rational(Ratio::new(n, d)))
}

impl From<i64> for Rational {
    fn from(n: i64) -> Self {
        Rational::from_integer(n as i128)
    }
}

impl From<Ratio<i128>> for Rational {
    fn from(r: Ratio<i128>) -> Self {
        Rational(r)
    }
}

impl Add for Rational {
    type Output = Rational;
    fn add(self, rhs: Rational) -> Rational {
        Rational(self.0 + rhs.0)
    }
}

impl Sub for Rational {
    type Output = Rational;
    fn sub(self, rhs: Rational) -> Rational {
        Rational(self.0 - rhs.0)
    }
}

impl Mul for Rational {
    type Output = Rational;
    fn mul(self, rhs: Rational) -> Rational {
        Rational(self.0 * rhs.0)
    }
}

impl Div for Rational {
    type Output = Rational;
    fn div(self, rhs: Rational) -> Rational {
        Rational(self.0 / rhs.0)
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Rational {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("not a rational number: {s:?}"));
        if let Some((n, d)) = s.split_once('/') {
            let n = parse_decimal(n.trim()).ok_or_else(bad)?;
            let d = parse_decimal(d.trim()).ok_or_else(bad)?;
            if d.0.is_zero() {
                return Err(Error::Parse(format!("zero denominator in {s:?}")));
            }
            return n.checked_div(&d).ok_or_else(bad);
        }
        parse_decimal(s).ok_or_else(bad)
    }
}

/// Parses an integer or finite decimal with optional exponent, exactly.
fn parse_decimal(s: &str) -> Option<Rational> {
    if s.is_empty() {
        return None;
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut numer: i128 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
    if neg {
        numer = -numer;
    }
    let scale = exp - frac_part.len() as i32;
    let ten_pow = |k: u32| 10i128.checked_pow(k);
    let value = if scale >= 0 {
        Rational::from_integer(numer.checked_mul(ten_pow(scale as u32)?)?)
    } else {
        Rational::new(numer, ten_pow((-scale) as u32)?)
    };
    Some(value)
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(i64),
            Float(f64),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::Int(n) => Ok(Rational::from(n)),
            // Floats in config files are read through their shortest decimal
            // representation, which is what the author typed.
            Raw::Float(x) => format!("{x:?}").parse().map_err(serde::de::Error::custom),
        }
    }
}

impl PartialEq<i64> for Rational {
    fn eq(&self, other: &i64) -> bool {
        *self == Rational::from(*other)
    }
}

impl PartialOrd<i64> for Rational {
    fn partial_cmp(&self, other: &i64) -> Option<Ordering> {
        self.partial_cmp(&Rational::from(*other))
    }
}
