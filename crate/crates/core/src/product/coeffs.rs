//! Residue-series coefficients in scale-free form.
//!
//! With `L = a1 a2` and `z = L y`, every density term is
//! `L exp(ln_scale) (c - d ln z) z^(p-1)` with `p = n + μ`. Non-integer gaps
//! give pure power terms (`d = 0`) for both pole families; an integer gap `N`
//! turns the colliding poles `n >= N` into `c - d ln z` pairs.

use crate::dd::Dd;
use crate::error::Result;
use crate::fading::ShadowedParams;
use crate::real::Real;
use crate::specfun::{self, scaled, Partial, TruncationPolicy};

use super::GapCase;

#[derive(Debug, Clone, Copy)]
pub(crate) struct LinkDd {
    pub mu: Dd,
    pub m: Dd,
    pub a: Dd,
    pub c: Dd,
    /// `ln b = m ln(1 - c)`
    pub ln_b: Dd,
    pub ln_gamma_mu: Dd,
}

impl LinkDd {
    pub fn new(p: &ShadowedParams) -> Result<Self> {
        let mu = Dd::from(p.mu);
        let m = Dd::from(p.m);
        let kappa = Dd::from(p.kappa);
        let mk = mu * kappa;
        let a = mu * (Dd::ONE + kappa) / p.gamma_bar;
        let c = mk / (mk + m);
        let ln_b = m * (m / (mk + m)).ln();
        let (ln_gamma_mu, _) = specfun::ln_gamma_dd(mu)?;
        Ok(LinkDd {
            mu,
            m,
            a,
            c,
            ln_b,
            ln_gamma_mu,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Coef {
    pub ln_scale: Dd,
    pub c: Dd,
    pub d: Dd,
    pub p: Dd,
    pub ln_gamma_p: Dd,
    pub psi_p: Dd,
    /// Relative error of `c` and `d`, measured against `|c| + |d|`.
    pub err: f64,
}

/// All coefficients sharing the index `n`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Group {
    pub first: Coef,
    pub second: Option<Coef>,
}

impl Group {
    pub fn iter(&self) -> impl Iterator<Item = &Coef> {
        std::iter::once(&self.first).chain(self.second.iter())
    }
}

fn ln_factorial(n: usize) -> Result<Dd> {
    Ok(specfun::ln_gamma_dd(Dd::from(n as f64 + 1.0))?.0)
}

fn parity(n: usize) -> f64 {
    if n % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CoefEngine {
    pub l1: LinkDd,
    pub l2: LinkDd,
    pub gap: Dd,
    pub case: GapCase,
}

impl CoefEngine {
    pub fn new(p1: &ShadowedParams, p2: &ShadowedParams, case: GapCase) -> Result<Self> {
        let l1 = LinkDd::new(p1)?;
        let l2 = LinkDd::new(p2)?;
        let gap = match case {
            GapCase::IntegerGap(n) => Dd::from(n as f64),
            GapCase::NonIntegerGap => l2.mu - l1.mu,
        };
        Ok(CoefEngine { l1, l2, gap, case })
    }

    pub fn ln_l(&self) -> Dd {
        (self.l1.a * self.l2.a).ln()
    }

    /// `ln(b1 b2 / (Γ(μ1) Γ(μ2)))`
    pub fn ln_prefactor(&self) -> Dd {
        self.l1.ln_b + self.l2.ln_b - self.l1.ln_gamma_mu - self.l2.ln_gamma_mu
    }

    pub fn group(&self, n: usize) -> Result<Group> {
        match self.case {
            GapCase::NonIntegerGap => Ok(Group {
                first: self.simple_pole(&self.l1, &self.l2, self.gap, n)?,
                second: Some(self.simple_pole(&self.l2, &self.l1, -self.gap, n)?),
            }),
            GapCase::IntegerGap(big_n) if n < big_n => Ok(Group {
                first: self.simple_pole(&self.l1, &self.l2, self.gap, n)?,
                second: None,
            }),
            GapCase::IntegerGap(big_n) => Ok(Group {
                first: self.double_pole(big_n, n)?,
                second: None,
            }),
        }
    }

    fn finish(&self, ln_scale: Dd, c: Dd, d: Dd, p: Dd, err: f64) -> Result<Coef> {
        let (ln_gamma_p, _) = specfun::ln_gamma_dd(p)?;
        let psi_p = specfun::digamma_dd(p)?;
        Ok(Coef {
            ln_scale,
            c,
            d,
            p,
            ln_gamma_p,
            psi_p,
            err,
        })
    }

    /// `Γ(g-n) F(m_i, -n; μ_i; c_i) F(m_j, g-n; μ_j; c_j) / ((-1)^n n!)` for the
    /// pole family of link `i`, where `g = μ_j - μ_i`.
    fn simple_pole(&self, li: &LinkDd, lj: &LinkDd, g: Dd, n: usize) -> Result<Coef> {
        let nf = Dd::from(n as f64);
        let (lg, sg) = specfun::ln_gamma_dd(g - nf)?;
        let f1 = specfun::hyp2f1_terminating(li.m, n as u64, li.mu, li.c)?;
        let f2 = specfun::hyp2f1_euler(lj.m, g - nf, lj.mu, lj.c, &TruncationPolicy::working_precision())?;
        let sign = sg * f1.sign() * f2.sign() * parity(n);
        let p = li.mu + nf;
        if sign == 0.0 {
            return self.finish(Dd::ZERO, Dd::ZERO, Dd::ZERO, p, 0.0);
        }
        let ln_scale = lg + f1.ln_abs() + f2.ln_abs() - ln_factorial(n)?;
        let err = f1.rel_err() + f2.rel_err() + Dd::EPSILON * (8.0 + lg.mag() + ln_scale.mag());
        self.finish(ln_scale, Dd::from(sign), Dd::ZERO, p, err)
    }

    /// Double-pole pair for `n >= N`, with `k = n - N`:
    /// `(-1)^N / (k! n!)` times
    /// `{F1' F2 + F1 F2' + [ψ(n+1) + ψ(k+1)] F1 F2}` (c) and `F1 F2` (d).
    fn double_pole(&self, big_n: usize, n: usize) -> Result<Coef> {
        let wp = TruncationPolicy::working_precision();
        let k = n - big_n;
        let (l1, l2) = (&self.l1, &self.l2);
        let f1 = specfun::hyp2f1_terminating(l1.m, n as u64, l1.mu, l1.c)?;
        let f2 = specfun::hyp2f1_terminating(l2.m, k as u64, l2.mu, l2.c)?;
        let d1 = specfun::hyp2f1_db_neg_int_euler(l1.m, n as u64, l1.mu, l1.c, &wp)?;
        let d2 = specfun::hyp2f1_db_neg_int_euler(l2.m, k as u64, l2.mu, l2.c, &wp)?;
        let psi = specfun::digamma_dd(Dd::from(n as f64 + 1.0))? + specfun::digamma_dd(Dd::from(k as f64 + 1.0))?;
        let p = l1.mu + Dd::from(n as f64);
        let ln_fact = ln_factorial(n)? + ln_factorial(k)?;
        let sign = parity(big_n);

        let (s1, s2) = (f1.sign(), f2.sign());
        let (base, r1, r2, dd) = if s1 != 0.0 && s2 != 0.0 {
            // everything relative to |F1 F2|
            let base = f1.ln_abs() + f2.ln_abs();
            let r1 = scaled(d1.mant, d1.ln_scale - f1.ln_abs());
            let r2 = scaled(d2.mant, d2.ln_scale - f2.ln_abs());
            (base, r1 * s2, r2 * s1, Dd::from(s1 * s2))
        } else {
            // a polynomial factor vanished; keep unscaled products
            let v1 = f1.value();
            let v2 = f2.value();
            (Dd::ZERO, d1.value() * v2, v1 * d2.value(), v1 * v2)
        };
        let c = r1 + r2 + psi * dd;
        let rounding = |q: &Partial<Dd>| q.rel_err();
        let err = (r1.mag() * (rounding(&d1) + rounding(&f2))
            + r2.mag() * (rounding(&d2) + rounding(&f1))
            + (psi * dd).mag() * (rounding(&f1) + rounding(&f2)))
            / (c.mag() + dd.mag()).max(f64::MIN_POSITIVE)
            + Dd::EPSILON * (16.0 + base.mag() + ln_fact.mag());
        self.finish(base - ln_fact, c * sign, dd * sign, p, err)
    }
}
