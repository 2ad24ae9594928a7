//! Exact rational time.
//!
//! Every time, demand, work amount and speed in this crate is an
//! [`ExactTime`]: a fraction of arbitrary-precision integers kept in lowest
//! terms. Nothing is ever rounded, so thresholds that sit exactly on a
//! ceiling discontinuity (e.g. `C = s * D`) are classified correctly.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid rational-string `{0}` (expected [+-]digits or [+-]digits/digits)")]
pub struct ParseTimeError(pub String);

/// An exact rational quantity.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ExactTime(BigRational);

impl ExactTime {
    /// `numerator / denominator`, reduced. Panics if `denominator == 0`.
    pub fn new(numerator: impl Into<BigInt>, denominator: impl Into<BigInt>) -> Self {
        ExactTime(BigRational::new(numerator.into(), denominator.into()))
    }

    pub fn from_integer(value: impl Into<BigInt>) -> Self {
        ExactTime(BigRational::from_integer(value.into()))
    }

    pub fn zero() -> Self {
        ExactTime(BigRational::zero())
    }

    pub fn one() -> Self {
        ExactTime(BigRational::one())
    }

    pub fn numerator(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denominator(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    /// Smallest integer not less than `self`.
    pub fn ceil(&self) -> ExactTime {
        ExactTime(self.0.ceil())
    }

    /// Largest integer not greater than `self`.
    pub fn floor(&self) -> ExactTime {
        ExactTime(self.0.floor())
    }

    /// Ceiling as a machine integer; saturates at the ends of the `u64` range.
    pub fn ceil_u64(&self) -> u64 {
        let c = self.0.ceil().to_integer();
        if c.is_negative() {
            0
        } else {
            c.to_u64().unwrap_or(u64::MAX)
        }
    }

    /// Floor as a machine integer; saturates at the ends of the `u64` range.
    pub fn floor_u64(&self) -> u64 {
        let f = self.0.floor().to_integer();
        if f.is_negative() {
            0
        } else {
            f.to_u64().unwrap_or(u64::MAX)
        }
    }

    /// Panics on zero.
    pub fn recip(&self) -> ExactTime {
        ExactTime(self.0.recip())
    }

    pub fn abs(&self) -> ExactTime {
        ExactTime(self.0.abs())
    }

    pub fn pow(&self, exp: u32) -> ExactTime {
        let mut acc = ExactTime::one();
        for _ in 0..exp {
            acc = &acc * self;
        }
        acc
    }

    pub fn min(self, other: ExactTime) -> ExactTime {
        std::cmp::min(self, other)
    }

    pub fn max(self, other: ExactTime) -> ExactTime {
        std::cmp::max(self, other)
    }

    /// Least common multiple of two positive rationals: the smallest positive
    /// rational that is an integer multiple of both.
    pub fn lcm(&self, other: &ExactTime) -> ExactTime {
        let num = self.numerator().lcm(other.numerator());
        let den = self.denominator().gcd(other.denominator());
        ExactTime::new(num, den)
    }

    /// Lossy conversion for human-readable summaries only.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl fmt::Display for ExactTime {
    /// `p` for integers, `p/q` otherwise.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for ExactTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for ExactTime {
    type Err = ParseTimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseTimeError(s.to_string());
        let (sign, body) = match s.as_bytes().first() {
            Some(b'-') => (-1, &s[1..]),
            Some(b'+') => (1, &s[1..]),
            _ => (1, s),
        };
        let (num, den) = match body.split_once('/') {
            Some((n, d)) => (n, Some(d)),
            None => (body, None),
        };
        let digits = |t: &str| -> Result<BigInt, ParseTimeError> {
            if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err());
            }
            t.parse::<BigInt>().map_err(|_| err())
        };
        let num = digits(num)? * sign;
        let den = match den {
            Some(d) => digits(d)?,
            None => BigInt::one(),
        };
        if den.is_zero() {
            return Err(err());
        }
        Ok(ExactTime::new(num, den))
    }
}

impl Serialize for ExactTime {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExactTime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct Visitor;
        impl serde::de::Visitor<'_> for Visitor {
            type Value = ExactTime;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a rational-string such as \"3\" or \"-7/2\", or an integer")
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<ExactTime, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<ExactTime, E> {
                Ok(ExactTime::from(v))
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<ExactTime, E> {
                Ok(ExactTime::from(v))
            }
        }
        deserializer.deserialize_any(Visitor)
    }
}

macro_rules! from_int {
    ($($t:ty),*) => {$(
        impl From<$t> for ExactTime {
            fn from(v: $t) -> Self {
                ExactTime::from_integer(v)
            }
        }
    )*};
}
from_int!(i32, i64, u32, u64, usize, BigInt);

impl From<BigRational> for ExactTime {
    fn from(v: BigRational) -> Self {
        ExactTime(v)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident) => {
        impl $trait<&ExactTime> for &ExactTime {
            type Output = ExactTime;
            fn $method(self, rhs: &ExactTime) -> ExactTime {
                ExactTime((&self.0).$method(&rhs.0))
            }
        }
        impl $trait<ExactTime> for ExactTime {
            type Output = ExactTime;
            fn $method(self, rhs: ExactTime) -> ExactTime {
                ExactTime(self.0.$method(rhs.0))
            }
        }
        impl $trait<&ExactTime> for ExactTime {
            type Output = ExactTime;
            fn $method(self, rhs: &ExactTime) -> ExactTime {
                ExactTime(self.0.$method(&rhs.0))
            }
        }
        impl $trait<ExactTime> for &ExactTime {
            type Output = ExactTime;
            fn $method(self, rhs: ExactTime) -> ExactTime {
                ExactTime((&self.0).$method(rhs.0))
            }
        }
    };
}
binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
// Division by zero panics, as for the underlying rational type.
binop!(Div, div);

impl AddAssign<&ExactTime> for ExactTime {
    fn add_assign(&mut self, rhs: &ExactTime) {
        self.0 += &rhs.0;
    }
}

impl AddAssign for ExactTime {
    fn add_assign(&mut self, rhs: ExactTime) {
        self.0 += rhs.0;
    }
}

impl SubAssign<&ExactTime> for ExactTime {
    fn sub_assign(&mut self, rhs: &ExactTime) {
        self.0 -= &rhs.0;
    }
}

impl Neg for ExactTime {
    type Output = ExactTime;
    fn neg(self) -> ExactTime {
        ExactTime(-self.0)
    }
}

impl Sum for ExactTime {
    fn sum<I: Iterator<Item = ExactTime>>(iter: I) -> ExactTime {
        iter.fold(ExactTime::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a ExactTime> for ExactTime {
    fn sum<I: Iterator<Item = &'a ExactTime>>(iter: I) -> ExactTime {
        iter.fold(ExactTime::zero(), |acc, x| acc + x)
    }
}

/// Shorthand for `ExactTime::new(n, d)` with machine integers.
pub fn ratio(n: i64, d: i64) -> ExactTime {
    ExactTime::new(n, d)
}

/// Minimum inter-arrival time of a sporadic task; `Infinite` means the task
/// releases a single job. Serialized as a rational-string or `null`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Period {
    Finite(ExactTime),
    Infinite,
}

impl Period {
    pub fn finite(&self) -> Option<&ExactTime> {
        match self {
            Period::Finite(t) => Some(t),
            Period::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Period::Infinite)
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Period::Finite(t) => write!(f, "{t}"),
            Period::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Period {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.finite().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(match Option::<ExactTime>::deserialize(deserializer)? {
            Some(t) => Period::Finite(t),
            None => Period::Infinite,
        })
    }
}
