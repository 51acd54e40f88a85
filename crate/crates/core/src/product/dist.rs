//! Accuracy-controlled evaluation of the product statistics.
//!
//! The residue series is exact in principle but its terms grow like
//! `exp(2 sqrt(z))` before they decay, so beyond some `z` no working precision
//! recovers the small result. Each evaluation first tries the series and
//! checks its own error estimate; when that is too large it switches to
//! quadrature. The distribution function above the switch point comes from a
//! survival table: the convolution density integrated panel by panel from the
//! far tail inward.

use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fading::{self, LinkDensity, ShadowedParams};
use crate::oracle::ConvolutionOracle;
use crate::quad;
use crate::specfun::{EvalWarning, TruncationPolicy};

use super::{cdf_sum, mgf_sum, pdf_sum, ProductModel};

/// Largest relative error accepted from the density or MGF series.
pub const SERIES_REL_TARGET: f64 = 1e-9;
/// Largest absolute error accepted from the distribution series.
pub const CDF_ABS_TARGET: f64 = 1e-10;

// node spacing of the survival table in ln y
const NODE_STEP: f64 = 1.0 / 16.0;
const TAIL_NEGLIGIBLE: f64 = 1e-18;
const MAX_NODES: usize = 16 * 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Residue series.
    Series,
    /// Numerical convolution of the link densities (density, distribution).
    Convolution,
    /// Conditional expectation `E[M2(s X1)]` by quadrature (MGF).
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error_estimate: f64,
    pub source: Source,
    /// Series terms, or integrand evaluations for quadrature.
    pub terms_used: usize,
    pub warnings: Vec<EvalWarning>,
}

#[derive(Debug)]
struct TailTable {
    /// ln y at the nodes, ascending; the first is the series switch point
    u: Vec<f64>,
    /// P(Y > y) at the nodes
    surv: Vec<f64>,
    surv_err: Vec<f64>,
    /// y f(y) at the nodes
    density: Vec<f64>,
}

/// Piecewise cubic Hermite interpolant of `F` in `ln y` with exact node
/// slopes `y f(y)`. Cheap enough to evaluate at every point of a large sample.
#[derive(Debug, Clone)]
pub struct CdfTable {
    u: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl CdfTable {
    pub fn lower(&self) -> f64 {
        self.u[0].exp()
    }

    pub fn upper(&self) -> f64 {
        self.u[self.u.len() - 1].exp()
    }

    /// `None` below the table; the last node value above it.
    pub fn eval(&self, y: f64) -> Option<f64> {
        if !(y > 0.0) {
            return Some(0.0);
        }
        let u = y.ln();
        if u < self.u[0] {
            return None;
        }
        let last = self.u.len() - 1;
        if u >= self.u[last] {
            return Some(self.f[last]);
        }
        let i = self.u.partition_point(|&x| x <= u) - 1;
        let h = self.u[i + 1] - self.u[i];
        let t = (u - self.u[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * self.f[i]
            + (t3 - 2.0 * t2 + t) * h * self.g[i]
            + (-2.0 * t3 + 3.0 * t2) * self.f[i + 1]
            + (t3 - t2) * h * self.g[i + 1];
        Some(v.clamp(self.f[i], self.f[i + 1]))
    }
}

/// A product model together with the fallbacks needed to evaluate it
/// anywhere in its support.
#[derive(Debug)]
pub struct ProductDistribution {
    model: ProductModel,
    policy: TruncationPolicy,
    oracle: ConvolutionOracle,
    outer: LinkDensity,
    tail: Mutex<Option<Arc<TailTable>>>,
}

impl ProductDistribution {
    pub fn new(model: ProductModel, policy: TruncationPolicy) -> Result<Self> {
        policy.validate()?;
        let oracle = ConvolutionOracle::new(&model)?;
        let outer = LinkDensity::new(model.link1())?;
        Ok(ProductDistribution {
            model,
            policy,
            oracle,
            outer,
            tail: Mutex::new(None),
        })
    }

    pub fn from_links(first: ShadowedParams, second: ShadowedParams) -> Result<Self> {
        Self::new(ProductModel::new(first, second)?, TruncationPolicy::default())
    }

    pub fn model(&self) -> &ProductModel {
        &self.model
    }

    pub fn policy(&self) -> &TruncationPolicy {
        &self.policy
    }

    fn near_gap_warnings(&self) -> Vec<EvalWarning> {
        if self.model.is_near_integer_gap() {
            vec![EvalWarning::NearIntegerGap]
        } else {
            Vec::new()
        }
    }

    /// `y f(y)` by convolution, the integrand for the distribution in `ln y`.
    fn log_density(&self, u: f64) -> Result<(f64, f64)> {
        let y = u.exp();
        let v = self.oracle.pdf(y)?;
        Ok((y * v.value, y * v.abs_error))
    }

    pub fn pdf(&self, y: f64) -> Result<Estimate> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::Domain(format!("pdf requires finite y > 0, got {y}")));
        }
        if let Ok(s) = pdf_sum(&self.model, y, &self.policy) {
            if s.rel_error() <= SERIES_REL_TARGET {
                return Ok(Estimate {
                    value: s.value.to_f64(),
                    error_estimate: s.tail + s.rounding,
                    source: Source::Series,
                    terms_used: s.terms,
                    warnings: self.near_gap_warnings(),
                });
            }
        }
        let v = self.oracle.pdf(y)?;
        Ok(Estimate {
            value: v.value,
            error_estimate: v.abs_error,
            source: Source::Convolution,
            terms_used: v.evaluations,
            warnings: Vec::new(),
        })
    }

    fn series_cdf(&self, y: f64) -> Option<(f64, f64, usize)> {
        let s = cdf_sum(&self.model, y, &self.policy).ok()?;
        let err = s.tail + s.rounding;
        (err <= CDF_ABS_TARGET).then(|| (s.value.to_f64(), err, s.terms))
    }

    pub fn cdf(&self, y: f64) -> Result<Estimate> {
        if !(y >= 0.0) || y.is_nan() {
            return Err(Error::Domain(format!("cdf requires y >= 0, got {y}")));
        }
        if y == 0.0 {
            return Ok(self.exact(0.0, Source::Series));
        }
        if y == f64::INFINITY {
            return Ok(self.exact(1.0, Source::Series));
        }
        if let Some((v, err, terms)) = self.series_cdf(y) {
            return Ok(Estimate {
                value: v.clamp(0.0, 1.0),
                error_estimate: err,
                source: Source::Series,
                terms_used: terms,
                warnings: self.near_gap_warnings(),
            });
        }
        let table = self.tail_table()?;
        let u = y.ln();
        if u < table.u[0] {
            return self.cdf_from_below(u);
        }
        let last = table.u.len() - 1;
        if u >= table.u[last] {
            return Ok(Estimate {
                value: 1.0 - table.surv[last],
                error_estimate: table.surv_err[last],
                source: Source::Convolution,
                terms_used: 0,
                warnings: Vec::new(),
            });
        }
        let i = table.u.partition_point(|&x| x <= u) - 1;
        let q = quad::integrate(
            |t: f64| self.log_density(t).map_or(f64::NAN, |v| v.0),
            u,
            table.u[i + 1],
            1e-17,
            1e-12,
            50,
        );
        let part = q.require("cdf")?;
        Ok(Estimate {
            value: (1.0 - table.surv[i + 1] - part).clamp(0.0, 1.0),
            error_estimate: table.surv_err[i + 1] + q.abs_error,
            source: Source::Convolution,
            terms_used: q.evaluations,
            warnings: Vec::new(),
        })
    }

    fn exact(&self, value: f64, source: Source) -> Estimate {
        Estimate {
            value,
            error_estimate: 0.0,
            source,
            terms_used: 0,
            warnings: Vec::new(),
        }
    }

    /// `∫_{-∞}^u y f(y) d(ln y)` in unit panels walking downward.
    fn cdf_from_below(&self, u: f64) -> Result<Estimate> {
        let mut total = 0.0;
        let mut err = 0.0;
        let mut evals = 0;
        let mut quiet = 0;
        let mut hi = u;
        for _ in 0..400 {
            let q = quad::integrate(|t: f64| self.log_density(t).map_or(f64::NAN, |v| v.0), hi - 1.0, hi, 1e-18, 1e-12, 50);
            let part = q.require("cdf")?;
            total += part;
            err += q.abs_error;
            evals += q.evaluations;
            quiet = if part < TAIL_NEGLIGIBLE { quiet + 1 } else { 0 };
            if quiet >= 2 {
                return Ok(Estimate {
                    value: total.clamp(0.0, 1.0),
                    error_estimate: err,
                    source: Source::Convolution,
                    terms_used: evals,
                    warnings: Vec::new(),
                });
            }
            hi -= 1.0;
        }
        Err(Error::QuadratureFailure {
            what: "cdf",
            abs_error: f64::INFINITY,
        })
    }

    /// Largest `ln y` on a quarter-octave grid (from `z = 1` upward) where the
    /// distribution series still meets [`CDF_ABS_TARGET`], and whether the
    /// series reached the far tail there.
    fn switch_point(&self) -> Result<(f64, bool)> {
        let ln_l = self.model.scale().ln();
        let step = std::f64::consts::LN_2 / 4.0;
        let mut k: i32 = 0;
        // move down first if even z = 1 is out of reach
        while self.series_cdf((k as f64 * step - ln_l).exp()).is_none() {
            k -= 1;
            if k < -200 {
                return Err(Error::NonConvergence {
                    what: "cdf switch point",
                    terms: self.policy.max_terms,
                });
            }
        }
        loop {
            let u = (k + 1) as f64 * step - ln_l;
            match self.series_cdf(u.exp()) {
                Some((v, _, _)) if v >= 1.0 - TAIL_NEGLIGIBLE => return Ok((u, true)),
                Some(_) if k < 800 => k += 1,
                _ => return Ok((k as f64 * step - ln_l, false)),
            }
        }
    }

    fn tail_table(&self) -> Result<Arc<TailTable>> {
        let mut guard = self.tail.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(t) = guard.as_ref() {
            return Ok(t.clone());
        }
        let t = Arc::new(self.build_tail_table()?);
        *guard = Some(t.clone());
        Ok(t)
    }

    fn build_tail_table(&self) -> Result<TailTable> {
        let (u0, complete) = self.switch_point()?;
        if complete {
            let (v, err, _) = self.series_cdf(u0.exp()).unwrap_or((1.0, 0.0, 0));
            let (g, _) = self.log_density(u0)?;
            return Ok(TailTable {
                u: vec![u0],
                surv: vec![(1.0 - v).max(0.0)],
                surv_err: vec![err],
                density: vec![g],
            });
        }
        let ln_mean = self.model.mean().ln();
        let mut panels: Vec<(f64, f64)> = Vec::new();
        let mut density = Vec::new();
        const BATCH: usize = 32;
        loop {
            let start = panels.len();
            let batch: Vec<(f64, f64, f64)> = (start..start + BATCH)
                .into_par_iter()
                .map(|j| {
                    let lo = u0 + j as f64 * NODE_STEP;
                    let hi = lo + NODE_STEP;
                    let (g, _) = self.log_density(lo)?;
                    let q = quad::integrate(
                        |t: f64| self.log_density(t).map_or(f64::NAN, |v| v.0),
                        lo,
                        hi,
                        1e-19,
                        1e-12,
                        50,
                    );
                    Ok((g, q.require("cdf tail table")?, q.abs_error))
                })
                .collect::<Result<_>>()?;
            for (g, v, e) in batch {
                density.push(g);
                panels.push((v, e));
            }
            let n = panels.len();
            let top = u0 + n as f64 * NODE_STEP;
            if top > ln_mean && panels[n - 1].0 < TAIL_NEGLIGIBLE && panels[n - 2].0 < TAIL_NEGLIGIBLE {
                break;
            }
            if n >= MAX_NODES {
                return Err(Error::QuadratureFailure {
                    what: "cdf tail table",
                    abs_error: panels[n - 1].0,
                });
            }
        }
        let n = panels.len();
        let top = u0 + n as f64 * NODE_STEP;
        density.push(self.log_density(top)?.0);
        // geometric remainder past the last node
        let (p1, p2) = (panels[n - 1].0, panels[n - 2].0);
        let rest = if p2 > p1 && p1 > 0.0 { p1 * p1 / (p2 - p1) } else { p1 };
        let mut surv = vec![0.0; n + 1];
        let mut surv_err = vec![0.0; n + 1];
        surv[n] = rest;
        surv_err[n] = rest;
        for j in (0..n).rev() {
            surv[j] = surv[j + 1] + panels[j].0;
            surv_err[j] = surv_err[j + 1] + panels[j].1;
        }
        Ok(TailTable {
            u: (0..=n).map(|j| u0 + j as f64 * NODE_STEP).collect(),
            surv,
            surv_err,
            density,
        })
    }

    /// Tabulates `F` from `lower` to the far tail for fast repeated lookup.
    pub fn cdf_table(&self, lower: f64) -> Result<CdfTable> {
        if !(lower > 0.0) || !lower.is_finite() {
            return Err(Error::Domain(format!("cdf_table requires finite lower > 0, got {lower}")));
        }
        let table = self.tail_table()?;
        let u0 = table.u[0];
        let ul = lower.ln().min(u0);
        let n = ((u0 - ul) / NODE_STEP).ceil() as usize;
        let head: Vec<f64> = (0..n).map(|j| ul + j as f64 * NODE_STEP).filter(|&u| u < u0).collect();
        let vals: Vec<(f64, f64)> = head
            .par_iter()
            .map(|&u| {
                let y = u.exp();
                Ok((self.cdf(y)?.value, y * self.pdf(y)?.value))
            })
            .collect::<Result<_>>()?;
        let mut out = CdfTable {
            u: head,
            f: vals.iter().map(|v| v.0).collect(),
            g: vals.iter().map(|v| v.1).collect(),
        };
        out.u.extend(&table.u);
        out.f.extend(table.surv.iter().map(|s| 1.0 - s));
        out.g.extend(&table.density);
        // enforce monotone node values against rounding at the junction
        for i in 1..out.f.len() {
            if out.f[i] < out.f[i - 1] {
                out.f[i] = out.f[i - 1];
            }
        }
        Ok(out)
    }

    /// `E[exp(sY)]` for `s < 0`.
    pub fn mgf(&self, s: f64) -> Result<Estimate> {
        if !(s < 0.0) || !s.is_finite() {
            return Err(Error::Domain(format!(
                "mgf requires finite s < 0 (E[exp(sY)] diverges for s > 0), got {s}"
            )));
        }
        if let Ok(v) = mgf_sum(&self.model, s, &self.policy) {
            if v.rel_error() <= SERIES_REL_TARGET {
                return Ok(Estimate {
                    value: v.value.to_f64(),
                    error_estimate: v.tail + v.rounding,
                    source: Source::Series,
                    terms_used: v.terms,
                    warnings: self.near_gap_warnings(),
                });
            }
        }
        let d2 = fading::derive_coeffs(self.model.link2())?;
        let p2 = self.model.link2();
        let edge = d2.a * d2.ln_one_minus_c.exp();
        // M2(t) = b (a/(a-t))^μ ((a-t)/(a(1-c)-t))^m for t <= 0
        let m2 = |t: f64| {
            (p2.m * d2.ln_one_minus_c + p2.mu * (d2.a.ln() - (d2.a - t).ln()) + p2.m * ((d2.a - t).ln() - (edge - t).ln()))
                .exp()
        };
        let value = fading::integrate_density(&self.outer, |x| m2(s * x), f64::INFINITY, 1e-15, "mgf")?;
        Ok(Estimate {
            value,
            error_estimate: 1e-13 * value.max(1e-300) + 1e-15,
            source: Source::Quadrature,
            terms_used: 0,
            warnings: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn baseline() -> ProductDistribution {
        ProductDistribution::from_links(
            ShadowedParams::unit(5.0, 1.2, 0.5).unwrap(),
            ShadowedParams::unit(2.1, 3.0, 0.8).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn pdf_reference_values() {
        let d = baseline();
        for (y, v) in [(5.0, 0.012_513_938_147_681_1), (1.0, 0.217_106_088_860_003), (0.01, 2.708_382_198_470_44)] {
            let e = d.pdf(y).unwrap();
            assert!((e.value - v).abs() < 1e-9 * v, "y={y}: {e:?}");
        }
        assert_eq!(d.pdf(0.01).unwrap().source, Source::Series);
    }

    #[test]
    fn mgf_reference_values() {
        let d = baseline();
        for (s, v) in [(-2.0, 0.467_522_967_621_249), (-1.0, 0.605_015_735_761_668), (-0.5, 0.729_940_655_031_70)] {
            let e = d.mgf(s).unwrap();
            assert!((e.value - v).abs() < 1e-10, "s={s}: {e:?}");
        }
        let e = d.mgf(-1e-4).unwrap();
        assert!((e.value - 1.0).abs() < 2e-4 && e.value < 1.0);
    }

    #[test]
    fn cdf_is_continuous_across_the_switch() {
        let d = baseline();
        let (u0, _) = d.switch_point().unwrap();
        let below = d.cdf((u0 - 1e-9).exp()).unwrap();
        let above = d.cdf((u0 + 1e-3).exp()).unwrap();
        assert!(above.value >= below.value - 1e-9);
        assert!(above.value - below.value < 1e-3);
        assert!((d.cdf(1e3).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_table_matches_direct_evaluation() {
        let d = baseline();
        let t = d.cdf_table(1e-4).unwrap();
        for y in [1e-3, 0.1, 0.7, 1.0, 3.0, 8.0, 20.0] {
            let a = t.eval(y).unwrap();
            let b = d.cdf(y).unwrap().value;
            assert!((a - b).abs() < 1e-7, "y={y}: {a} vs {b}");
        }
    }
}
