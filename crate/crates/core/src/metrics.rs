//! Performance metrics of the cascaded channel and of a variable-gain
//! amplify-and-forward relay whose second hop is cascaded.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fading::{self, ShadowedParams};
use crate::product::{self, ProductDistribution, ProductModel};
use crate::specfun::{SeriesValue, TruncationPolicy};

/// `E[X^2] / E[X]^2` for one link.
fn second_moment_ratio(p: &ShadowedParams) -> f64 {
    let k1 = 1.0 + p.kappa;
    1.0 + (1.0 + 2.0 * p.kappa) / (p.mu * k1 * k1) + p.kappa * p.kappa / (p.m * k1 * k1)
}

/// `Var[Y] / E[Y]^2`. Second moments of independent factors multiply, so
/// this is the product of the per-link ratios minus one.
pub fn amount_of_fading(model: &ProductModel) -> f64 {
    second_moment_ratio(model.link1()) * second_moment_ratio(model.link2()) - 1.0
}

/// `Var[Y] / E[Y]^3`.
pub fn cqei(model: &ProductModel) -> f64 {
    amount_of_fading(model) / model.mean()
}

fn check_threshold(gamma_th: f64) -> Result<()> {
    if gamma_th > 0.0 && gamma_th.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("gamma_th must be finite and > 0 (got {gamma_th})")))
    }
}

/// `P(Y <= γ_th)` from the residue series.
pub fn op_cascade(model: &ProductModel, gamma_th: f64, policy: &TruncationPolicy) -> Result<SeriesValue> {
    check_threshold(gamma_th)?;
    product::cdf_product(model, gamma_th, policy)
}

/// Outage of `min(γ_sr, γ_rd)` for independent hops.
pub fn relay_outage(f_sr: f64, f_rd: f64) -> f64 {
    f_sr + f_rd - f_sr * f_rd
}

/// Variable-gain relay: a single κ-μ shadowed source–relay hop and a
/// cascaded relay–destination hop.
#[derive(Debug, Clone)]
pub struct RelayModel {
    pub sr_link: ShadowedParams,
    pub rd_cascade: ProductModel,
}

impl RelayModel {
    pub fn new(sr_link: ShadowedParams, rd_cascade: ProductModel) -> Result<Self> {
        sr_link.validate()?;
        Ok(RelayModel { sr_link, rd_cascade })
    }
}

/// Outage under the `min(γ_sr, γ_rd)` bound, `F_sr + F_rd - F_sr F_rd`.
/// The single-hop CDF is a quadrature value; its error is taken as 1e-12.
pub fn op_relay_variable_gain(relay: &RelayModel, gamma_th: f64, policy: &TruncationPolicy) -> Result<SeriesValue> {
    check_threshold(gamma_th)?;
    let f_sr = fading::cdf_single(&relay.sr_link, gamma_th)?;
    let rd = product::cdf_product(&relay.rd_cascade, gamma_th, policy)?;
    let weight = 1.0 - f_sr;
    Ok(SeriesValue {
        value: relay_outage(f_sr, rd.value),
        tail_estimate: weight * rd.tail_estimate,
        rounding_error: weight * rd.rounding_error + 1e-12,
        ..rd
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub af: f64,
    pub cqei: f64,
    /// `(γ_th, P(Y <= γ_th))`, in the order of the requested thresholds.
    pub op_curve: Vec<(f64, f64)>,
}

impl MetricReport {
    /// Outage is evaluated with the fallback-aware distribution, so the curve
    /// stays accurate where the series alone would lose precision.
    pub fn new(dist: &ProductDistribution, thresholds: &[f64]) -> Result<Self> {
        let op_curve = thresholds
            .par_iter()
            .map(|&t| {
                check_threshold(t)?;
                Ok((t, dist.cdf(t)?.value))
            })
            .collect::<Result<Vec<_>>>()?;
        let model = dist.model();
        Ok(MetricReport {
            af: amount_of_fading(model),
            cqei: cqei(model),
            op_curve,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::product::moment_product;

    fn model(p1: (f64, f64, f64), p2: (f64, f64, f64)) -> ProductModel {
        ProductModel::new(
            ShadowedParams::unit(p1.0, p1.1, p1.2).unwrap(),
            ShadowedParams::unit(p2.0, p2.1, p2.2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn af_without_line_of_sight() {
        let m = model((0.0, 1.5, 2.0), (0.0, 3.0, 7.0));
        let expect = (1.0 + 1.0 / 1.5) * (1.0 + 1.0 / 3.0) - 1.0;
        assert!((amount_of_fading(&m) - expect).abs() < 1e-15);
    }

    #[test]
    fn af_matches_moments() {
        let m = model((5.0, 1.2, 0.5), (2.1, 3.0, 0.8));
        let m1 = moment_product(&m, 1).unwrap();
        let by_moments = moment_product(&m, 2).unwrap() / (m1 * m1) - 1.0;
        assert!((amount_of_fading(&m) - by_moments).abs() < 1e-12 * by_moments);
    }

    #[test]
    fn af_symmetric_and_cqei_scaling() {
        let a = model((5.0, 1.2, 0.5), (2.1, 3.0, 0.8));
        let b = model((2.1, 3.0, 0.8), (5.0, 1.2, 0.5));
        assert_eq!(amount_of_fading(&a), amount_of_fading(&b));
        let scaled = ProductModel::new(
            ShadowedParams::new(5.0, 1.2, 0.5, 2.0).unwrap(),
            ShadowedParams::new(2.1, 3.0, 0.8, 4.0).unwrap(),
        )
        .unwrap();
        assert!((cqei(&scaled) * 8.0 - cqei(&a)).abs() < 1e-14 * cqei(&a));
    }

    #[test]
    fn relay_combination() {
        assert_eq!(relay_outage(0.5, 0.5), 0.75);
        assert_eq!(relay_outage(1.0, 0.3), 1.0);
        let relay = RelayModel::new(ShadowedParams::unit(5.0, 1.2, 1.3).unwrap(), model((5.0, 1.2, 0.5), (2.1, 3.0, 0.8))).unwrap();
        let p = TruncationPolicy::default();
        let r = op_relay_variable_gain(&relay, 0.5, &p).unwrap().value;
        let sr = fading::cdf_single(&relay.sr_link, 0.5).unwrap();
        let rd = op_cascade(&relay.rd_cascade, 0.5, &p).unwrap().value;
        assert!(r >= sr.max(rd));
        assert!(op_cascade(&relay.rd_cascade, 0.0, &p).is_err());
    }
}
