//! Summation of the residue series for the density, distribution function
//! and moment generating function.

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::specfun::{scaled, TruncationPolicy};

use super::coeffs::Coef;
use super::ProductModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Statistic {
    Pdf,
    Cdf,
    Mgf,
}

/// Sum of signed terms given as `factor * exp(ln_mag)`, held relative to a
/// running scale so terms anywhere in the double range can be combined.
struct LogAcc {
    scale: f64,
    started: bool,
    sum: Dd,
    err: f64,
    max_term: f64,
}

impl LogAcc {
    const HEADROOM: f64 = 300.0;

    fn new() -> Self {
        LogAcc {
            scale: 0.0,
            started: false,
            sum: Dd::ZERO,
            err: 0.0,
            max_term: 0.0,
        }
    }

    /// Adds a term; returns its magnitude in the current scale.
    fn push(&mut self, ln_mag: Dd, factor: Dd, factor_err: f64) -> f64 {
        let lm = ln_mag.to_f64();
        if !lm.is_finite() || factor.mag() == 0.0 {
            return 0.0;
        }
        if !self.started {
            self.scale = lm.round();
            self.started = true;
        } else if lm > self.scale + Self::HEADROOM {
            let next = lm.round();
            let f = (Dd::from(self.scale) - Dd::from(next)).exp();
            let ff = f.to_f64();
            self.sum *= f;
            self.err *= ff;
            self.max_term *= ff;
            self.scale = next;
        }
        let rel = ln_mag - Dd::from(self.scale);
        let e = rel.exp();
        let t = e * factor;
        let em = e.mag();
        self.sum += t;
        self.err += em * (factor_err + factor.mag() * Dd::EPSILON * (4.0 + rel.mag()));
        let tm = t.mag();
        if tm > self.max_term {
            self.max_term = tm;
        }
        tm
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SeriesSum {
    pub value: Dd,
    pub tail: f64,
    pub rounding: f64,
    pub max_ratio: f64,
    pub terms: usize,
}

impl SeriesSum {
    pub fn rel_error(&self) -> f64 {
        let v = self.value.mag();
        if v == 0.0 {
            if self.tail + self.rounding == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.tail + self.rounding) / v
        }
    }
}

fn rescale(x: f64, l: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        (x.ln() + l).exp()
    }
}

fn term(stat: Statistic, k: &Coef, lx: Dd) -> (Dd, Dd, f64) {
    let (c, d, p) = (k.c, k.d, k.p);
    match stat {
        Statistic::Pdf => {
            let dl = d * lx;
            (k.ln_scale + (p - Dd::ONE) * lx, c - dl, k.err * (c.mag() + dl.mag()))
        }
        Statistic::Cdf => {
            let dl = d * lx;
            let pinv = p.recip();
            let factor = (c - dl) * pinv + d * pinv * pinv;
            let err = k.err * ((c.mag() + dl.mag()) * pinv.to_f64() + d.mag() * pinv.to_f64().powi(2));
            (k.ln_scale + p * lx, factor, err)
        }
        Statistic::Mgf => {
            let dl = d * (k.psi_p + lx);
            (k.ln_scale + k.ln_gamma_p + p * lx, c - dl, k.err * (c.mag() + dl.mag()))
        }
    }
}

/// Sums the series at `lx = ln z` (pdf, cdf) or `lx = ln w` (mgf).
pub(crate) fn sum(model: &ProductModel, stat: Statistic, lx: Dd, policy: &TruncationPolicy) -> Result<SeriesSum> {
    let engine = model.engine();
    let ln_pref = match stat {
        Statistic::Pdf => engine.ln_prefactor() + engine.ln_l(),
        _ => engine.ln_prefactor(),
    };
    let x = lx.to_f64().exp();
    // the terms peak near sqrt(z) for the density and near w for the MGF
    let n_min = match stat {
        Statistic::Mgf => x.ceil() as usize + 2,
        _ => x.sqrt().ceil() as usize + 2,
    };
    let what = match stat {
        Statistic::Pdf => "pdf_product",
        Statistic::Cdf => "cdf_product",
        Statistic::Mgf => "mgf_product",
    };
    let ln_abs_tol = policy.abs_tol.ln() - ln_pref.to_f64();
    let mut acc = LogAcc::new();
    let mut last = f64::NAN;
    let mut last_scale = f64::NAN;
    let mut small_run = 0;
    for n in 0..policy.max_terms {
        let g = model.group(n)?;
        let mut mag = 0.0;
        for k in g.iter() {
            let (lm, f, fe) = term(stat, k, lx);
            mag += acc.push(lm, f, fe);
        }
        if acc.scale != last_scale && last_scale.is_finite() {
            let r = (last_scale - acc.scale).exp();
            last *= r;
        }
        last_scale = acc.scale;
        let prev = last;
        last = mag;
        let abs_small = (ln_abs_tol - acc.scale).min(700.0).exp();
        let bound = policy.rel_tol * acc.sum.mag() + abs_small;
        small_run = if mag <= bound { small_run + 1 } else { 0 };
        let tail = if last == 0.0 {
            0.0
        } else if prev > last {
            let r = last / prev;
            last * r / (1.0 - r)
        } else {
            f64::INFINITY
        };
        if n + 1 >= n_min && small_run >= policy.consecutive_small && tail <= bound {
            let s = acc.sum;
            let lscale = Dd::from(acc.scale) + ln_pref;
            let sm = s.mag();
            return Ok(SeriesSum {
                value: scaled(s, lscale),
                tail: rescale(tail, lscale.to_f64()),
                rounding: rescale(acc.err, lscale.to_f64()),
                max_ratio: if sm > 0.0 { acc.max_term / sm } else { f64::INFINITY },
                terms: n + 1,
            });
        }
    }
    Err(Error::NonConvergence {
        what,
        terms: policy.max_terms,
    })
}
