//! A single κ-μ shadowed power variable.
//!
//! The density is written as `θ x^(μ-1) e^(-a x) 1F1(m; μ; a c x)` with
//! `a = μ(1+κ)/γ̄`, `c = μκ/(μκ+m)`, `b = (1-c)^m` and `θ = a^μ b / Γ(μ)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::quad;
use crate::specfun::{self, KummerScaled, Partial, SeriesValue, TruncationPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowedParams {
    pub kappa: f64,
    pub mu: f64,
    pub m: f64,
    pub gamma_bar: f64,
}

impl ShadowedParams {
    pub fn new(kappa: f64, mu: f64, m: f64, gamma_bar: f64) -> Result<Self> {
        let p = ShadowedParams { kappa, mu, m, gamma_bar };
        p.validate()?;
        Ok(p)
    }

    /// Unit mean power.
    pub fn unit(kappa: f64, mu: f64, m: f64) -> Result<Self> {
        Self::new(kappa, mu, m, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str, v: f64| {
            if ok && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain(format!("{msg} (got {v})")))
            }
        };
        check(self.kappa >= 0.0, "kappa must satisfy kappa >= 0", self.kappa)?;
        check(self.mu > 0.0, "mu must satisfy mu > 0", self.mu)?;
        check(self.m > 0.0, "m must satisfy m > 0", self.m)?;
        check(self.gamma_bar > 0.0, "gamma_bar must satisfy gamma_bar > 0", self.gamma_bar)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub theta: f64,
    /// `ln(1 - c)`, kept separately because `1 - c` can be tiny.
    pub ln_one_minus_c: f64,
    pub ln_theta: f64,
}

pub fn derive_coeffs(p: &ShadowedParams) -> Result<DerivedCoeffs> {
    p.validate()?;
    let a = p.mu * (1.0 + p.kappa) / p.gamma_bar;
    let mk = p.mu * p.kappa;
    let c = mk / (mk + p.m);
    let ln_one_minus_c = -(mk / p.m).ln_1p();
    let ln_b = p.m * ln_one_minus_c;
    let ln_theta = p.mu * a.ln() + ln_b - specfun::ln_gamma(p.mu)?;
    Ok(DerivedCoeffs {
        a,
        b: ln_b.exp(),
        c,
        theta: ln_theta.exp(),
        ln_one_minus_c,
        ln_theta,
    })
}

/// Reusable density evaluator for one link.
#[derive(Debug, Clone)]
pub struct LinkDensity {
    params: ShadowedParams,
    coeffs: DerivedCoeffs,
    kummer: KummerScaled,
}

impl LinkDensity {
    pub fn new(p: &ShadowedParams) -> Result<Self> {
        let coeffs = derive_coeffs(p)?;
        Ok(LinkDensity {
            params: *p,
            coeffs,
            kummer: KummerScaled::new(p.m, p.mu)?,
        })
    }

    pub fn params(&self) -> &ShadowedParams {
        &self.params
    }

    pub fn coeffs(&self) -> &DerivedCoeffs {
        &self.coeffs
    }

    fn ln_pdf_terms(&self, x: f64) -> Result<(f64, usize)> {
        let d = &self.coeffs;
        if x <= 0.0 {
            let mu = self.params.mu;
            let v = if mu < 1.0 {
                f64::INFINITY
            } else if mu == 1.0 {
                d.ln_theta
            } else {
                f64::NEG_INFINITY
            };
            return Ok((v, 0));
        }
        let (lk, terms) = self.kummer.ln_eval(d.a * d.c * x)?;
        Ok((d.ln_theta + (self.params.mu - 1.0) * x.ln() - d.a * x + lk, terms))
    }

    /// Log density; NaN only if the confluent series fails.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        self.ln_pdf_terms(x).map_or(f64::NAN, |(v, _)| v)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }
}

/// Single-link density at `x > 0`.
pub fn pdf_single(p: &ShadowedParams, x: f64) -> Result<SeriesValue> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("pdf_single requires finite x > 0, got {x}")));
    }
    let d = LinkDensity::new(p)?;
    let (l, terms) = d.ln_pdf_terms(x)?;
    let value = l.exp();
    Ok(SeriesValue {
        value,
        terms_used: terms,
        tail_estimate: f64::EPSILON * value,
        max_term_ratio: 1.0,
        rounding_error: f64::EPSILON * (2.0 + l.abs()) * value,
        converged: true,
        warnings: Vec::new(),
    })
}

/// `ln E[X^(s-1)]` in double-double, through the Euler-transformed form
/// `Γ(s+μ-1) (1-c)^(1-s) 2F1(μ-m, 1-s; μ; c) / (Γ(μ) a^(s-1))`.
pub(crate) fn ln_mellin_dd(p: &ShadowedParams, s: Dd) -> Result<Dd> {
    p.validate()?;
    let mu = Dd::from(p.mu);
    let one = Dd::ONE;
    let arg = s + mu - one;
    if !(arg.to_f64() > 0.0) {
        return Err(Error::StripViolation {
            s: s.to_f64(),
            bound: 1.0 - p.mu,
        });
    }
    let kappa = Dd::from(p.kappa);
    let m = Dd::from(p.m);
    let a = mu * (one + kappa) / p.gamma_bar;
    let mk = mu * kappa;
    let c = mk / (mk + m);
    let ln_1mc = (m / (mk + m)).ln();
    let b = one - s;
    let f: Partial<Dd> = match b.as_nonpositive_integer() {
        Some(n) => specfun::hyp2f1_terminating(mu - m, n, mu, c)?,
        None => specfun::hyp2f1_series(mu - m, b, mu, c, &TruncationPolicy::working_precision(), "mellin_single")?,
    };
    if f.sign() <= 0.0 {
        return Err(Error::NonConvergence {
            what: "mellin_single",
            terms: f.terms,
        });
    }
    let (lg_arg, _) = specfun::ln_gamma_dd(arg)?;
    let (lg_mu, _) = specfun::ln_gamma_dd(mu)?;
    Ok(lg_arg - lg_mu + b * ln_1mc + b * a.ln() + f.ln_abs())
}

/// Mellin transform `E[X^(s-1)]`, defined for `s > 1 - μ`.
pub fn mellin_single(p: &ShadowedParams, s: f64) -> Result<f64> {
    if !s.is_finite() {
        return Err(Error::Domain(format!("mellin_single requires finite s, got {s}")));
    }
    Ok(ln_mellin_dd(p, Dd::from(s))?.exp().to_f64())
}

/// Moment generating function `E[e^(sX)]` for `s < a(1-c)`:
/// `b (a/(a-s))^μ ((a-s)/(a(1-c)-s))^m`.
pub fn mgf_single(p: &ShadowedParams, s: f64) -> Result<f64> {
    let d = derive_coeffs(p)?;
    let edge = d.a * d.ln_one_minus_c.exp();
    if !(s < edge) {
        return Err(Error::Domain(format!("mgf_single requires s < {edge}, got {s}")));
    }
    let l = p.m * d.ln_one_minus_c + p.mu * (d.a.ln() - (d.a - s).ln()) + p.m * ((d.a - s).ln() - (edge - s).ln());
    Ok(l.exp())
}

/// `P(X <= x)` by adaptive quadrature of the density. The first panel up to
/// `min(x, γ̄)` integrates in `u = x^μ`, which removes the `x^(μ-1)`
/// endpoint behavior; the rest walks doubling panels.
pub fn cdf_single(p: &ShadowedParams, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("cdf_single requires x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let d = LinkDensity::new(p)?;
    cdf_with(&d, x)
}

pub(crate) fn cdf_with(d: &LinkDensity, x: f64) -> Result<f64> {
    Ok(integrate_density(d, |_| 1.0, x, 1e-12, "cdf_single")?.clamp(0.0, 1.0))
}

/// `∫_0^upper f(x) g(x) dx` for a bounded, smooth `g`; `upper` may be
/// infinite. Panels past the first double in width; once beyond the mode,
/// two consecutive panels contributing less than 1e-17 end the walk.
pub(crate) fn integrate_density<G: Fn(f64) -> f64>(
    d: &LinkDensity,
    g: G,
    upper: f64,
    abs_tol: f64,
    what: &'static str,
) -> Result<f64> {
    let mu = d.params.mu;
    let split = d.params.gamma_bar.min(upper);
    let q = 1.0 / mu;
    let head = quad::integrate(
        |u: f64| {
            let t = u.powf(q);
            d.pdf(t) * g(t) * q * t / u
        },
        0.0,
        split.powf(mu),
        abs_tol,
        1e-13,
        2000,
    )
    .require(what)?;
    let mut total = head;
    let mut lo = split;
    let mut width = split;
    let mut quiet = 0;
    while lo < upper {
        let hi = (lo + width).min(upper);
        let part = quad::integrate(|t: f64| d.pdf(t) * g(t), lo, hi, abs_tol, 1e-13, 2000).require(what)?;
        total += part;
        quiet = if part.abs() < 1e-17 && lo > d.params.gamma_bar { quiet + 1 } else { 0 };
        if quiet >= 2 {
            break;
        }
        if width > 1e300 {
            return Err(Error::QuadratureFailure { what, abs_error: f64::INFINITY });
        }
        lo = hi;
        width *= 2.0;
    }
    Ok(total)
}

/// Draws from one link by the Gamma–Poisson mixture:
/// `ξ ~ Gamma(m, 1/m)`, `K ~ Poisson(μκξ)`, `G ~ Gamma(μ+K, 1)`,
/// `X = γ̄ G / (μ(1+κ))`.
#[derive(Debug, Clone)]
pub struct LinkSampler {
    mu: f64,
    mu_kappa: f64,
    scale: f64,
    shadow: Gamma<f64>,
}

impl LinkSampler {
    pub fn new(p: &ShadowedParams) -> Result<Self> {
        p.validate()?;
        let shadow = Gamma::new(p.m, 1.0 / p.m).map_err(|e| Error::Domain(e.to_string()))?;
        Ok(LinkSampler {
            mu: p.mu,
            mu_kappa: p.mu * p.kappa,
            scale: p.gamma_bar / (p.mu * (1.0 + p.kappa)),
            shadow,
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let lambda = self.mu_kappa * self.shadow.sample(rng);
        let k = if lambda > 0.0 {
            Poisson::new(lambda).map_or(0.0, |d| d.sample(rng))
        } else {
            0.0
        };
        // shape >= mu > 0 and scale 1 are always valid
        let g = Gamma::new(self.mu + k, 1.0).map_or(f64::NAN, |d| d.sample(rng));
        self.scale * g
    }
}

pub fn sample_single<R: Rng + ?Sized>(p: &ShadowedParams, rng: &mut R, count: usize) -> Result<Vec<f64>> {
    let s = LinkSampler::new(p)?;
    Ok((0..count).map(|_| s.draw(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn baseline() -> ShadowedParams {
        ShadowedParams::unit(5.0, 1.2, 0.5).unwrap()
    }

    #[test]
    fn derive_examples() {
        let d = derive_coeffs(&ShadowedParams::unit(0.0, 2.0, 1.0).unwrap()).unwrap();
        assert_eq!((d.a, d.b, d.c), (2.0, 1.0, 0.0));
        assert!((d.theta - 4.0).abs() < 1e-14);
        let d = derive_coeffs(&ShadowedParams::unit(1.0, 1.0, 1.0).unwrap()).unwrap();
        assert!((d.a - 2.0).abs() < 1e-15 && (d.c - 0.5).abs() < 1e-15 && (d.b - 0.5).abs() < 1e-15);
        assert!((d.theta - 1.0).abs() < 1e-14);
        let d = derive_coeffs(&baseline()).unwrap();
        assert!((d.c - 6.0 / 6.5).abs() < 1e-15);
        assert!((d.b - (0.5f64 / 6.5).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid() {
        assert!(ShadowedParams::unit(-0.1, 1.0, 1.0).is_err());
        assert!(ShadowedParams::unit(1.0, 0.0, 1.0).is_err());
        assert!(ShadowedParams::new(1.0, 1.0, 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn gamma_reduction() {
        let p = ShadowedParams::unit(0.0, 2.0, 3.0).unwrap();
        let v = pdf_single(&p, 1.0).unwrap().value;
        assert!((v - 4.0 * (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn pdf_normalizes() {
        for m in [0.5, 1.3] {
            let p = ShadowedParams::unit(5.0, 1.2, m).unwrap();
            assert!((cdf_single(&p, 1e4).unwrap() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn mellin_normalization_and_mean() {
        let p = baseline();
        assert!((mellin_single(&p, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let p = ShadowedParams::new(2.1, 3.0, 0.8, 2.5).unwrap();
        assert!((mellin_single(&p, 2.0).unwrap() - 2.5).abs() < 1e-14);
        assert!(matches!(mellin_single(&baseline(), -0.3), Err(Error::StripViolation { .. })));
    }

    #[test]
    fn mellin_fractional_matches_quadrature() {
        let p = ShadowedParams::unit(1.0, 1.0, 1.0).unwrap();
        let d = LinkDensity::new(&p).unwrap();
        let q = quad::integrate_to_infinity(|x: f64| x.sqrt() * d.pdf(x), 0.0, 1.0, 1e-14, 1e-18);
        assert!((mellin_single(&p, 1.5).unwrap() - q.value).abs() < 1e-8);
    }

    #[test]
    fn mgf_closed_form_matches_quadrature() {
        let p = baseline();
        let d = LinkDensity::new(&p).unwrap();
        let s = -0.7;
        let q = quad::integrate(|u: f64| {
            let x = u.powf(1.0 / 1.2);
            (s * x).exp() * d.pdf(x) * x / (1.2 * u)
        }, 0.0, 1.0, 1e-14, 1e-14, 2000);
        let tail = quad::integrate_to_infinity(|x: f64| (s * x).exp() * d.pdf(x), 1.0, 1.0, 1e-14, 1e-18);
        assert!((mgf_single(&p, s).unwrap() - q.value - tail.value).abs() < 1e-10);
    }

    #[test]
    fn median_by_bisection() {
        let p = ShadowedParams::unit(2.1, 3.0, 0.8).unwrap();
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if cdf_single(&p, mid).unwrap() < 0.5 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((cdf_single(&p, 0.5 * (lo + hi)).unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn sampler_mean_and_second_moment() {
        let p = ShadowedParams::unit(2.1, 3.0, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs = sample_single(&p, &mut rng, 200_000).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * sd / n.sqrt());
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / n;
        let sd2 = (xs.iter().map(|x| (x * x - m2).powi(2)).sum::<f64>() / n).sqrt();
        assert!((m2 - mellin_single(&p, 3.0).unwrap()).abs() < 5.0 * sd2 / n.sqrt());
    }
}
