//! Statistics of `Y = X1 X2` for independent κ-μ shadowed `X1`, `X2`.
//!
//! The Mellin transform of `Y` factors into the two single-link transforms;
//! inverting it by residues gives power series in `y`. Poles of
//! `Γ(s+μ1-1) Γ(s+μ2-1)` are simple when `μ2 - μ1` is not an integer and
//! collide pairwise from index `N` on when it equals the integer `N`, which
//! adds `ln y` terms. Coefficients are computed in double-double precision and
//! cached per model.

mod coeffs;
mod dist;
mod series;

use std::sync::{Arc, RwLock};

use serde::Serialize;

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::fading::{self, ShadowedParams};
use crate::specfun::{self, EvalWarning, SeriesValue, TruncationPolicy};

use coeffs::{CoefEngine, Group};
use series::Statistic;

pub use dist::{CdfTable, Estimate, ProductDistribution, Source};

/// Gaps within this distance of an integer use the double-pole series.
pub const INTEGER_GAP_TOL: f64 = 1e-8;
/// Gaps closer than this to an integer (but outside [`INTEGER_GAP_TOL`]) are
/// evaluated as non-integer with a [`EvalWarning::NearIntegerGap`] warning.
pub const NEAR_INTEGER_GAP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GapCase {
    NonIntegerGap,
    IntegerGap(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CoefficientKind {
    A,
    B,
    C,
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesCoefficient {
    pub kind: CoefficientKind,
    pub index: usize,
    pub value: f64,
    /// `ln |value|`, finite even where `value` itself under- or overflows.
    pub ln_abs: f64,
    pub sign: f64,
}

/// A pair of links with its pole structure and a coefficient cache shared
/// between clones. Links are held ordered so that `μ1 <= μ2`; the `A` and `B`
/// coefficient families keep the caller's labelling (`A` belongs to the
/// first link passed in).
#[derive(Debug, Clone)]
pub struct ProductModel {
    link1: ShadowedParams,
    link2: ShadowedParams,
    swapped: bool,
    gap: f64,
    case: GapCase,
    near_integer: bool,
    engine: CoefEngine,
    cache: Arc<RwLock<Vec<Group>>>,
}

impl ProductModel {
    pub fn new(first: ShadowedParams, second: ShadowedParams) -> Result<Self> {
        first.validate()?;
        second.validate()?;
        let swapped = second.mu < first.mu;
        let (link1, link2) = if swapped { (second, first) } else { (first, second) };
        let gap = link2.mu - link1.mu;
        let nearest = gap.round();
        let dist = (gap - nearest).abs();
        let case = if dist <= INTEGER_GAP_TOL {
            GapCase::IntegerGap(nearest as usize)
        } else {
            GapCase::NonIntegerGap
        };
        let near_integer = case == GapCase::NonIntegerGap && dist < NEAR_INTEGER_GAP;
        let engine = CoefEngine::new(&link1, &link2, case)?;
        Ok(ProductModel {
            link1,
            link2,
            swapped,
            gap,
            case,
            near_integer,
            engine,
            cache: Arc::new(RwLock::new(Vec::new())),
        })
    }

    /// The link with the smaller μ.
    pub fn link1(&self) -> &ShadowedParams {
        &self.link1
    }

    pub fn link2(&self) -> &ShadowedParams {
        &self.link2
    }

    /// `μ2 - μ1 >= 0`.
    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn case(&self) -> GapCase {
        self.case
    }

    pub fn is_near_integer_gap(&self) -> bool {
        self.near_integer
    }

    /// `E[Y] = γ̄1 γ̄2`.
    pub fn mean(&self) -> f64 {
        self.link1.gamma_bar * self.link2.gamma_bar
    }

    /// `a1 a2`, the natural scale of the series argument.
    pub fn scale(&self) -> f64 {
        (self.engine.l1.a * self.engine.l2.a).to_f64()
    }

    pub(crate) fn engine(&self) -> &CoefEngine {
        &self.engine
    }

    /// Cached coefficient group `n`, computing any missing ones.
    pub(crate) fn group(&self, n: usize) -> Result<Group> {
        {
            let cache = self.cache.read().unwrap_or_else(|e| e.into_inner());
            if let Some(g) = cache.get(n) {
                return Ok(*g);
            }
        }
        let mut cache = self.cache.write().unwrap_or_else(|e| e.into_inner());
        while cache.len() <= n {
            let next = self.engine.group(cache.len())?;
            cache.push(next);
        }
        Ok(cache[n])
    }

    pub fn coefficient(&self, kind: CoefficientKind, n: usize) -> Result<SeriesCoefficient> {
        let mismatch = |expected| Error::CaseMismatch {
            kind: match kind {
                CoefficientKind::A => "A",
                CoefficientKind::B => "B",
                CoefficientKind::C => "C",
                CoefficientKind::D => "D",
            },
            expected,
        };
        let g = match (kind, self.case) {
            (CoefficientKind::A, GapCase::NonIntegerGap) | (CoefficientKind::B, GapCase::NonIntegerGap) => self.group(n)?,
            (CoefficientKind::A, GapCase::IntegerGap(big_n)) if n < big_n => self.group(n)?,
            (CoefficientKind::A, GapCase::IntegerGap(_)) => return Err(mismatch("non-integer gap, or n below the integer gap")),
            (CoefficientKind::B, GapCase::IntegerGap(_)) => return Err(mismatch("non-integer gap")),
            (_, GapCase::NonIntegerGap) => return Err(mismatch("integer gap")),
            (_, GapCase::IntegerGap(big_n)) if n < big_n => return Err(Error::IndexBelowGap { n, gap: big_n }),
            (_, GapCase::IntegerGap(_)) => self.group(n)?,
        };
        let second_family = (kind == CoefficientKind::B) != (self.swapped && self.case == GapCase::NonIntegerGap);
        let k = if second_family { g.second.unwrap_or(g.first) } else { g.first };
        // un-normalized: L^p exp(ln_scale) times c - d ln L (C), d (D), c (A, B)
        let ln_l = self.engine.ln_l();
        let factor = match kind {
            CoefficientKind::C => k.c - k.d * ln_l,
            CoefficientKind::D => k.d,
            _ => k.c,
        };
        let sign = factor.signum();
        let ln_abs = if sign == 0.0 {
            f64::NEG_INFINITY
        } else {
            (k.ln_scale + k.p * ln_l + factor.abs().ln()).to_f64()
        };
        Ok(SeriesCoefficient {
            kind,
            index: n,
            value: sign * ln_abs.exp(),
            ln_abs,
            sign,
        })
    }

    fn series_value(&self, s: series::SeriesSum) -> SeriesValue {
        let value = s.value.to_f64();
        let mut out = SeriesValue {
            value,
            terms_used: s.terms,
            tail_estimate: s.tail,
            max_term_ratio: s.max_ratio,
            rounding_error: s.rounding.max(0.5 * f64::EPSILON * value.abs()),
            converged: true,
            warnings: Vec::new(),
        };
        out.flag_precision();
        if self.near_integer {
            out.push_warning(EvalWarning::NearIntegerGap);
        }
        out
    }
}

pub fn coeff_a(model: &ProductModel, n: usize) -> Result<f64> {
    Ok(model.coefficient(CoefficientKind::A, n)?.value)
}

pub fn coeff_b(model: &ProductModel, n: usize) -> Result<f64> {
    Ok(model.coefficient(CoefficientKind::B, n)?.value)
}

pub fn coeff_c(model: &ProductModel, n: usize) -> Result<f64> {
    Ok(model.coefficient(CoefficientKind::C, n)?.value)
}

pub fn coeff_d(model: &ProductModel, n: usize) -> Result<f64> {
    Ok(model.coefficient(CoefficientKind::D, n)?.value)
}

fn ln_scaled_arg(model: &ProductModel, y: f64) -> Dd {
    model.engine.ln_l() + Dd::from(y).ln()
}

pub(crate) fn pdf_sum(model: &ProductModel, y: f64, policy: &TruncationPolicy) -> Result<series::SeriesSum> {
    series::sum(model, Statistic::Pdf, ln_scaled_arg(model, y), policy)
}

pub(crate) fn cdf_sum(model: &ProductModel, y: f64, policy: &TruncationPolicy) -> Result<series::SeriesSum> {
    series::sum(model, Statistic::Cdf, ln_scaled_arg(model, y), policy)
}

pub(crate) fn mgf_sum(model: &ProductModel, s: f64, policy: &TruncationPolicy) -> Result<series::SeriesSum> {
    series::sum(model, Statistic::Mgf, model.engine.ln_l() - Dd::from(-s).ln(), policy)
}

/// Residue-series density of `Y` at `y > 0`.
pub fn pdf_product(model: &ProductModel, y: f64, policy: &TruncationPolicy) -> Result<SeriesValue> {
    policy.validate()?;
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::Domain(format!("pdf_product requires finite y > 0, got {y}")));
    }
    Ok(model.series_value(pdf_sum(model, y, policy)?))
}

/// Term-wise integrated series for `P(Y <= y)`. A value outside [0, 1] by
/// more than its own error estimate is clamped and flagged.
pub fn cdf_product(model: &ProductModel, y: f64, policy: &TruncationPolicy) -> Result<SeriesValue> {
    policy.validate()?;
    if !(y >= 0.0) || !y.is_finite() {
        return Err(Error::Domain(format!("cdf_product requires finite y >= 0, got {y}")));
    }
    if y == 0.0 {
        return Ok(SeriesValue {
            value: 0.0,
            terms_used: 0,
            tail_estimate: 0.0,
            max_term_ratio: 0.0,
            rounding_error: 0.0,
            converged: true,
            warnings: Vec::new(),
        });
    }
    let mut v = model.series_value(cdf_sum(model, y, policy)?);
    let slack = v.tail_estimate + v.rounding_error;
    if v.value < -slack || v.value > 1.0 + slack {
        v.value = v.value.clamp(0.0, 1.0);
        v.push_warning(EvalWarning::OutsideUnitInterval);
    }
    Ok(v)
}

/// Residue series for `E[e^(sY)]`, `s < 0`. The series converges for every
/// `s < 0` but cancels badly once `a1 a2 / |s|` is large; the returned
/// diagnostics say how much. [`ProductDistribution::mgf`] switches to
/// quadrature in that regime.
pub fn mgf_product(model: &ProductModel, s: f64, policy: &TruncationPolicy) -> Result<SeriesValue> {
    policy.validate()?;
    if !(s < 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!(
            "mgf_product requires finite s < 0 (E[exp(sY)] diverges for s > 0), got {s}"
        )));
    }
    Ok(model.series_value(mgf_sum(model, s, policy)?))
}

/// `E[Y^(s-1)]`, the product of the single-link Mellin transforms.
pub fn mellin_product(model: &ProductModel, s: f64) -> Result<f64> {
    Ok(fading::mellin_single(&model.link1, s)? * fading::mellin_single(&model.link2, s)?)
}

fn ln_moment(p: &ShadowedParams, n: u32) -> Result<Dd> {
    fading::ln_mellin_dd(p, Dd::from(n as f64 + 1.0))
}

/// `E[Y^n]` in closed form: each factor is `(μ)_n / a^n (1-c)^-n F(μ-m, -n; μ; c)`,
/// a terminating sum.
pub fn moment_product(model: &ProductModel, n: u32) -> Result<f64> {
    Ok((ln_moment(&model.link1, n)? + ln_moment(&model.link2, n)?).exp().to_f64())
}

/// `E[(X1 X2)^n]` where `X1` is κ-μ shadowed and `X2` is plain κ-μ (the
/// `m -> ∞` limit; `km.m` is ignored). The κ-μ factor is
/// `(μ)_n / a^n 1F1(-n; μ; -κμ)`.
pub fn moment_mixed(shadowed: &ShadowedParams, km: &ShadowedParams, n: u32) -> Result<f64> {
    shadowed.validate()?;
    let km = ShadowedParams { m: 1.0, ..*km };
    km.validate()?;
    let mu = Dd::from(km.mu);
    let a = mu * (Dd::ONE + Dd::from(km.kappa)) / km.gamma_bar;
    let nf = Dd::from(n as f64);
    let poly = specfun::hyp1f1_series(-nf, mu, -mu * Dd::from(km.kappa), &TruncationPolicy::working_precision())?;
    let ln_poch = specfun::ln_gamma_dd(mu + nf)?.0 - specfun::ln_gamma_dd(mu)?.0;
    let ln_km = ln_poch - nf * a.ln() + poly.ln_abs();
    Ok((ln_moment(shadowed, n)? + ln_km).exp().to_f64())
}
