//! Compensated, rescaling series accumulator.
//!
//! Terms are pushed in a running scale: the represented value is
//! `sum * exp(ln_scale)`. When a term or the partial sum leaves a safe
//! magnitude band everything is multiplied by an exact power of two and the
//! scale adjusted, so long recurrences can pass through 1e±300 without
//! overflow.

use super::TruncationPolicy;
use crate::real::Real;

const RESCALE_ABOVE: f64 = 4.149_515_568_880_993e180; // 2^600
const RESCALE_BY: f64 = 2.409_919_865_102_884e-181; // 2^-600
const RESCALE_BITS: f64 = 600.0;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Partial<T> {
    pub mant: T,
    pub ln_scale: T,
    /// Relative truncation bound.
    pub tail: f64,
    /// Relative rounding estimate.
    pub rounding: f64,
    pub terms: usize,
    pub max_ratio: f64,
}

impl<T: Real> Partial<T> {
    #[cfg(test)]
    pub fn exact(v: T) -> Self {
        Partial {
            mant: v,
            ln_scale: T::zero(),
            tail: 0.0,
            rounding: T::EPSILON,
            terms: 1,
            max_ratio: 1.0,
        }
    }

    pub fn value(&self) -> T {
        if self.ln_scale.to_f64() == 0.0 {
            self.mant
        } else {
            scaled(self.mant, self.ln_scale)
        }
    }

    /// ln of the absolute value; `-inf` for zero.
    pub fn ln_abs(&self) -> T {
        self.mant.abs().ln() + self.ln_scale
    }

    pub fn sign(&self) -> f64 {
        let v = self.mant.to_f64();
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    }

    pub fn rel_err(&self) -> f64 {
        self.tail + self.rounding
    }

    /// Multiply by `exp(l)`.
    pub fn with_factor(mut self, l: T) -> Self {
        self.ln_scale += l;
        self.rounding += T::EPSILON * (1.0 + 2.0 * l.mag());
        self
    }
}

/// `v * exp(l)` without intermediate overflow.
pub(crate) fn scaled<T: Real>(v: T, l: T) -> T {
    let m = v.mag();
    if m == 0.0 {
        return T::zero();
    }
    let lv = v.abs().ln() + l;
    let r = lv.exp();
    if v.to_f64() < 0.0 {
        -r
    } else {
        r
    }
}

pub(crate) struct Accumulator<T> {
    sum: T,
    ln_scale: T,
    ln_rescale: T,
    weighted_abs: f64,
    max_term: f64,
    last: f64,
    prev: f64,
    terms: usize,
    small_run: usize,
    abs_small: f64,
}

impl<T: Real> Accumulator<T> {
    pub fn new(policy: &TruncationPolicy) -> Self {
        Self::with_ln_scale(T::zero(), policy)
    }

    /// Terms will be pushed relative to `exp(ln_scale)`.
    pub fn with_ln_scale(ln_scale: T, policy: &TruncationPolicy) -> Self {
        let ln_rescale = T::from_f64(RESCALE_BITS) * T::from_f64(2.0).ln();
        let mut a = Accumulator {
            sum: T::zero(),
            ln_scale,
            ln_rescale,
            weighted_abs: 0.0,
            max_term: 0.0,
            last: f64::NAN,
            prev: f64::NAN,
            terms: 0,
            small_run: 0,
            abs_small: 0.0,
        };
        a.update_abs_small(policy);
        a
    }

    fn update_abs_small(&mut self, policy: &TruncationPolicy) {
        let l = policy.abs_tol.ln() - self.ln_scale.to_f64();
        self.abs_small = if l > 700.0 { f64::INFINITY } else { l.exp() };
    }

    /// Keep `term` and the partial sum below 2^600 by rescaling both.
    pub fn rescale(&mut self, term: &mut T, policy: &TruncationPolicy) {
        while term.mag() > RESCALE_ABOVE || self.sum.mag() > RESCALE_ABOVE {
            let f = T::from_f64(RESCALE_BY);
            *term *= f;
            self.sum *= f;
            self.weighted_abs *= RESCALE_BY;
            self.max_term *= RESCALE_BY;
            self.last *= RESCALE_BY;
            self.prev *= RESCALE_BY;
            self.ln_scale += self.ln_rescale;
            self.update_abs_small(policy);
        }
    }

    pub fn push(&mut self, t: T, policy: &TruncationPolicy) {
        let m = t.mag();
        self.sum += t;
        // per-term recurrence error grows roughly like sqrt(k)
        self.weighted_abs += m * (2.0 + 4.0 * (self.terms as f64).sqrt());
        if m > self.max_term {
            self.max_term = m;
        }
        self.prev = self.last;
        self.last = m;
        self.terms += 1;
        if m <= policy.rel_tol * self.sum.mag() + self.abs_small {
            self.small_run += 1;
        } else {
            self.small_run = 0;
        }
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    #[cfg(test)]
    /// Geometric bound on the remaining terms from the last two magnitudes.
    pub fn tail_bound(&self) -> f64 {
        if self.last == 0.0 {
            return 0.0;
        }
        if self.prev > 0.0 && self.last < self.prev {
            let r = self.last / self.prev;
            self.last * r / (1.0 - r)
        } else {
            f64::INFINITY
        }
    }

    #[cfg(test)]
    pub fn settled(&self, policy: &TruncationPolicy) -> bool {
        self.small_run >= policy.consecutive_small
            && self.tail_bound() <= policy.rel_tol * self.sum.mag() + self.abs_small
    }

    /// Like [`settled`](Self::settled) with a caller-supplied tail bound.
    pub fn settled_with_tail(&self, tail_abs: f64, policy: &TruncationPolicy) -> bool {
        self.small_run >= policy.consecutive_small && tail_abs <= policy.rel_tol * self.sum.mag() + self.abs_small
    }

    #[cfg(test)]
    pub fn finish(&self) -> Partial<T> {
        self.finish_with_tail(self.tail_bound())
    }

    /// Finish with a caller-supplied bound on the remaining terms (in the
    /// running scale); zero for terminating series.
    pub fn finish_with_tail(&self, tail_abs: f64) -> Partial<T> {
        let s = self.sum.mag();
        let (tail, rounding, max_ratio) = if s > 0.0 {
            (
                tail_abs / s,
                T::EPSILON * self.weighted_abs / s,
                self.max_term / s,
            )
        } else if self.max_term == 0.0 {
            (0.0, 0.0, 1.0)
        } else {
            (f64::INFINITY, f64::INFINITY, f64::INFINITY)
        };
        Partial {
            mant: self.sum,
            ln_scale: self.ln_scale,
            tail,
            rounding,
            terms: self.terms,
            max_ratio,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dd::Dd;

    #[test]
    fn exponential_series_with_rescaling() {
        // e^700 summed from 1: terms pass 2^600 well before the peak
        let p = TruncationPolicy::working_precision();
        let x = 700.0;
        let mut acc = Accumulator::<f64>::new(&p);
        let mut t = 1.0f64;
        for k in 0..5000 {
            acc.push(t, &p);
            if acc.settled(&p) {
                break;
            }
            t *= x / (k as f64 + 1.0);
            acc.rescale(&mut t, &p);
        }
        let r = acc.finish();
        assert!((r.ln_abs() - 700.0).abs() < 1e-12);
    }

    #[test]
    fn dd_partial_value_and_scaling() {
        let p = Partial::exact(Dd::from_f64(3.0)).with_factor(Dd::from_f64(2.0).ln());
        assert!((p.value() - Dd::from_f64(6.0)).abs().to_f64() < 1e-30);
        assert_eq!(scaled(-2.0f64, 0.0), -2.0);
    }
}
