//! Double-double arithmetic.
//!
//! A [`Dd`] is an unevaluated sum `hi + lo` of two `f64` with `|lo| <= ulp(hi)/2`,
//! giving roughly 106 bits of significand. The residue series of the product
//! density cancel by up to ~1e20 before settling, so the coefficient and series
//! evaluation runs in this type and only the final value is rounded to `f64`.
//!
//! The exponent range is that of `f64`. Transcendentals (`exp`, `ln`,
//! `sin_cos_pi`) are accurate to a few units of 2^-104.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

#[derive(Clone, Copy, Default, PartialEq)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let e = b - (s - a);
    (s, e)
}

#[inline]
fn split(a: f64) -> (f64, f64) {
    const SPLITTER: f64 = 134_217_729.0; // 2^27 + 1
    const SPLIT_THRESH: f64 = 6.696_928_794_914_17e299;
    if a.abs() > SPLIT_THRESH {
        let a = a * 3.725_290_298_461_914e-9; // 2^-28
        let t = SPLITTER * a;
        let hi = t - (t - a);
        let lo = a - hi;
        (hi * 268_435_456.0, lo * 268_435_456.0)
    } else {
        let t = SPLITTER * a;
        let hi = t - (t - a);
        (hi, a - hi)
    }
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    let e = ((ah * bh - p) + ah * bl + al * bh) + al * bl;
    (p, e)
}

/// `x * 2^k` for any `k` that keeps the result representable.
fn ldexp(x: f64, k: i32) -> f64 {
    if k > 1000 {
        ldexp(x * f64::powi(2.0, 1000), k - 1000)
    } else if k < -1000 {
        ldexp(x * f64::powi(2.0, -1000), k + 1000)
    } else {
        x * f64::powi(2.0, k)
    }
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    pub const PI: Dd = Dd {
        hi: 3.141_592_653_589_793,
        lo: 1.224_646_799_147_353_2e-16,
    };
    pub const LN2: Dd = Dd {
        hi: 0.693_147_180_559_945_3,
        lo: 2.319_046_813_846_299_6e-17,
    };
    pub const EULER_GAMMA: Dd = Dd {
        hi: 0.577_215_664_901_532_9,
        lo: -4.942_915_152_430_645e-18,
    };
    pub const HALF_LN_2PI: Dd = Dd {
        hi: 0.918_938_533_204_672_8,
        lo: -3.878_294_158_067_241_4e-17,
    };
    /// Unit roundoff, 2^-104.
    pub const EPSILON: f64 = 4.930_380_657_631_324e-32;

    #[inline]
    pub const fn new(hi: f64, lo: f64) -> Self {
        Dd { hi, lo }
    }

    #[inline]
    pub fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn hi(self) -> f64 {
        self.hi
    }

    #[inline]
    pub fn lo(self) -> f64 {
        self.lo
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.hi.is_finite()
    }

    #[inline]
    pub fn is_nan(self) -> bool {
        self.hi.is_nan()
    }

    #[inline]
    pub fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }

    #[inline]
    pub fn signum(self) -> f64 {
        if self.hi > 0.0 {
            1.0
        } else if self.hi < 0.0 {
            -1.0
        } else {
            0.0
        }
    }

    /// Exact product with a power of two.
    #[inline]
    pub fn ldexp(self, k: i32) -> Self {
        Dd {
            hi: ldexp(self.hi, k),
            lo: ldexp(self.lo, k),
        }
    }

    pub fn floor(self) -> Self {
        let f = self.hi.floor();
        if f == self.hi {
            let (hi, lo) = quick_two_sum(f, self.lo.floor());
            Dd { hi, lo }
        } else {
            Dd { hi: f, lo: 0.0 }
        }
    }

    pub fn round(self) -> Self {
        (self + Dd::from_f64(0.5)).floor()
    }

    /// `Some(n)` when the value is exactly the nonpositive integer `-n`.
    pub fn as_nonpositive_integer(self) -> Option<u64> {
        if self.hi <= 0.0 && self.lo == 0.0 && self.hi == self.hi.round() && self.hi > -1e15 {
            Some((-self.hi) as u64)
        } else {
            None
        }
    }

    #[inline]
    fn mul_f64(self, b: f64) -> Self {
        let (p1, p2) = two_prod(self.hi, b);
        let p2 = p2 + self.lo * b;
        let (hi, lo) = quick_two_sum(p1, p2);
        Dd::finite_or(hi, lo)
    }

    #[inline]
    fn finite_or(hi: f64, lo: f64) -> Self {
        if hi.is_finite() {
            Dd { hi, lo }
        } else {
            Dd { hi, lo: 0.0 }
        }
    }

    pub fn sqr(self) -> Self {
        self * self
    }

    pub fn recip(self) -> Self {
        Dd::ONE / self
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return if self.hi == 0.0 { Dd::ZERO } else { Dd::from_f64(f64::NAN) };
        }
        let s = self.hi.sqrt();
        let r = self - Dd::from_f64(s).sqr();
        let (hi, lo) = two_sum(s, r.hi / (2.0 * s));
        Dd { hi, lo }
    }

    pub fn powi(self, n: i64) -> Self {
        if n == 0 {
            return Dd::ONE;
        }
        let mut base = self;
        let mut e = n.unsigned_abs();
        let mut acc = Dd::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            e >>= 1;
            if e > 0 {
                base = base.sqr();
            }
        }
        if n < 0 {
            acc.recip()
        } else {
            acc
        }
    }

    pub fn exp(self) -> Self {
        if self.hi.is_nan() {
            return self;
        }
        if self.hi > 709.78 {
            return Dd::from_f64(f64::INFINITY);
        }
        if self.hi < -745.2 {
            return Dd::ZERO;
        }
        if self.hi == 0.0 && self.lo == 0.0 {
            return Dd::ONE;
        }
        let k = (self.hi / Dd::LN2.hi).round();
        let r = (self - Dd::LN2.mul_f64(k)).ldexp(-10);
        // expm1(r) by Taylor; |r| < 3.4e-4
        let mut term = r;
        let mut sum = r;
        for i in 2..24 {
            term = (term * r) / Dd::from_f64(i as f64);
            sum += term;
            if term.hi.abs() < 1e-36 * sum.hi.abs() {
                break;
            }
        }
        for _ in 0..10 {
            sum = sum.ldexp(1) + sum.sqr();
        }
        (sum + Dd::ONE).ldexp(k as i32)
    }

    pub fn ln(self) -> Self {
        if self.hi.is_nan() || self.hi < 0.0 {
            return Dd::from_f64(f64::NAN);
        }
        if self.hi == 0.0 {
            return Dd::from_f64(f64::NEG_INFINITY);
        }
        if self.hi.is_infinite() {
            return self;
        }
        if self.hi < 1e-290 {
            return self.ldexp(600).ln() - Dd::LN2.mul_f64(600.0);
        }
        if self.hi > 1e290 {
            return self.ldexp(-600).ln() + Dd::LN2.mul_f64(600.0);
        }
        let y = Dd::from_f64(self.hi.ln());
        y + self * (-y).exp() - Dd::ONE
    }

    pub fn powf(self, e: Dd) -> Self {
        if self.hi == 0.0 {
            return if e.hi > 0.0 { Dd::ZERO } else { Dd::from_f64(f64::INFINITY) };
        }
        (e * self.ln()).exp()
    }

    /// `(sin(pi x), cos(pi x))`, with the argument reduced exactly.
    pub fn sin_cos_pi(self) -> (Dd, Dd) {
        let q = self.ldexp(1).round();
        let r = self - q.ldexp(-1);
        let t = Dd::PI * r;
        let t2 = t.sqr();
        // sin t and cos t by Taylor, |t| <= pi/4
        let mut s = t;
        let mut term = t;
        let mut c = Dd::ONE;
        let mut cterm = Dd::ONE;
        let mut k = 1.0;
        loop {
            cterm = -(cterm * t2) / Dd::from_f64(k * (k + 1.0));
            term = -(term * t2) / Dd::from_f64((k + 1.0) * (k + 2.0));
            c += cterm;
            s += term;
            k += 2.0;
            if term.hi.abs() < 1e-34 && cterm.hi.abs() < 1e-34 || k > 60.0 {
                break;
            }
        }
        let quadrant = q.to_f64().rem_euclid(4.0) as u8;
        match quadrant {
            0 => (s, c),
            1 => (c, -s),
            2 => (-s, -c),
            _ => (-c, s),
        }
    }
}

impl fmt::Debug for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dd({:e} + {:e})", self.hi, self.lo)
    }
}

impl fmt::Display for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd::from_f64(x)
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            ord => Some(ord),
        }
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, b: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, b.hi);
        if !s1.is_finite() {
            return Dd { hi: s1, lo: 0.0 };
        }
        let (t1, t2) = two_sum(self.lo, b.lo);
        let s2 = s2 + t1;
        let (s1, s2) = quick_two_sum(s1, s2);
        let s2 = s2 + t2;
        let (hi, lo) = quick_two_sum(s1, s2);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, b: Dd) -> Dd {
        let (p1, p2) = two_prod(self.hi, b.hi);
        let p2 = p2 + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p1, p2);
        Dd::finite_or(hi, lo)
    }
}

impl Div for Dd {
    type Output = Dd;
    #[inline]
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        if !q1.is_finite() {
            return Dd { hi: q1, lo: 0.0 };
        }
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (q1, q2) = quick_two_sum(q1, q2);
        Dd { hi: q1, lo: q2 } + Dd::from_f64(q3)
    }
}

macro_rules! assign_ops {
    ($($tr:ident $m:ident $op:tt),*) => {$(
        impl $tr for Dd {
            #[inline]
            fn $m(&mut self, rhs: Dd) {
                *self = *self $op rhs;
            }
        }
    )*};
}
assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /);

impl Mul<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, b: f64) -> Dd {
        self.mul_f64(b)
    }
}

impl Add<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, b: f64) -> Dd {
        self + Dd::from_f64(b)
    }
}

impl Sub<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, b: f64) -> Dd {
        self - Dd::from_f64(b)
    }
}

impl Div<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn div(self, b: f64) -> Dd {
        self / Dd::from_f64(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: Dd, b: Dd) -> f64 {
        ((a - b) / b).abs().to_f64()
    }

    #[test]
    fn arithmetic_keeps_low_part() {
        let x = Dd::from_f64(1.0) + Dd::from_f64(1e-20);
        assert_eq!(x.hi(), 1.0);
        assert_eq!(x.lo(), 1e-20);
        let third = Dd::ONE / Dd::from_f64(3.0);
        let back = third * 3.0;
        assert!((back - Dd::ONE).abs().to_f64() < 1e-31);
    }

    #[test]
    fn exp_ln_round_trip() {
        for &x in &[1e-300, 1e-20, 0.3, 1.0, 2.5, 17.0, 1e5, 1e200] {
            let v = Dd::from_f64(x);
            // the round trip is conditioned by |ln x|
            assert!(rel(v.ln().exp(), v) < 1e-30 * x.ln().abs().max(10.0), "x = {x}");
        }
        for &x in &[-600.0, -30.0, -1.0, -1e-8, 1e-8, 0.5, 1.0, 50.0, 700.0] {
            let v = Dd::from_f64(x);
            let back = v.exp().ln();
            assert!((back - v).abs().to_f64() <= 1e-30 * x.abs().max(1.0), "x = {x}");
        }
    }

    #[test]
    fn exp_of_one_matches_constant() {
        // e = 2.718281828459045 + 1.4456468917292502e-16
        let e = Dd::new(2.718_281_828_459_045, 1.445_646_891_729_250_2e-16);
        assert!(rel(Dd::ONE.exp(), e) < 1e-31);
        assert!(rel(Dd::from_f64(2.0).ln(), Dd::LN2) < 1e-31);
    }

    #[test]
    fn sin_cos_pi_exact_points() {
        let (s, c) = Dd::from_f64(0.5).sin_cos_pi();
        assert!((s - Dd::ONE).abs().to_f64() < 1e-31);
        assert!(c.abs().to_f64() < 1e-31);
        let (s, _) = Dd::from_f64(-2.5).sin_cos_pi();
        assert!((s + Dd::ONE).abs().to_f64() < 1e-31);
        let (s, c) = Dd::from_f64(1.0 / 6.0).sin_cos_pi();
        // 1/6 is not exact in binary; sin(pi x) has slope ~ 2.7 there.
        assert!((s - Dd::from_f64(0.5)).abs().to_f64() < 1e-16);
        assert!((s.sqr() + c.sqr() - Dd::ONE).abs().to_f64() < 1e-30);
    }

    #[test]
    fn sqrt_and_powi() {
        let two = Dd::from_f64(2.0);
        assert!(rel(two.sqrt().sqr(), two) < 1e-31);
        assert!(rel(Dd::from_f64(1.1).powi(50), Dd::from_f64(1.1).ln().mul_f64(50.0).exp()) < 1e-29);
        assert!(rel(two.powi(-3), Dd::from_f64(0.125)) < 1e-32);
    }

    #[test]
    fn ordering_uses_low_part() {
        let a = Dd::new(1.0, 1e-20);
        let b = Dd::new(1.0, -1e-20);
        assert!(a > b);
        assert_eq!(Dd::from_f64(-3.0).as_nonpositive_integer(), Some(3));
        assert_eq!(Dd::new(-3.0, 1e-20).as_nonpositive_integer(), None);
    }
}
