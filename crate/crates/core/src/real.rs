//! The small float abstraction shared by the series code, implemented for
//! `f64` (fast paths) and [`Dd`] (cancellation-heavy paths).

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::dd::Dd;

pub trait Real:
    Copy
    + Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    /// Unit roundoff of the working precision.
    const EPSILON: f64;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn abs(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn is_finite(self) -> bool;
    /// `Some(n)` when the value is exactly `-n` for an integer `n >= 0`.
    fn as_nonpositive_integer(self) -> Option<u64>;

    #[inline]
    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    #[inline]
    fn one() -> Self {
        Self::from_f64(1.0)
    }

    #[inline]
    fn mag(self) -> f64 {
        self.to_f64().abs()
    }
}

impl Real for f64 {
    const EPSILON: f64 = f64::EPSILON / 2.0;

    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn as_nonpositive_integer(self) -> Option<u64> {
        if self <= 0.0 && self == self.round() && self > -1e15 {
            Some((-self) as u64)
        } else {
            None
        }
    }
}

impl Real for Dd {
    const EPSILON: f64 = Dd::EPSILON;

    #[inline]
    fn from_f64(x: f64) -> Self {
        Dd::from_f64(x)
    }
    #[inline]
    fn to_f64(self) -> f64 {
        Dd::to_f64(self)
    }
    #[inline]
    fn abs(self) -> Self {
        Dd::abs(self)
    }
    #[inline]
    fn exp(self) -> Self {
        Dd::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        Dd::ln(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        Dd::is_finite(self)
    }
    fn as_nonpositive_integer(self) -> Option<u64> {
        Dd::as_nonpositive_integer(self)
    }
}
