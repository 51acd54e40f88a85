use std::sync::OnceLock;

use crate::dd::Dd;
use crate::error::{Error, Result};

/// B_2k as exact rationals, k = 1..=15.
const BERNOULLI: [(f64, f64); 15] = [
    (1.0, 6.0),
    (-1.0, 30.0),
    (1.0, 42.0),
    (-1.0, 30.0),
    (5.0, 66.0),
    (-691.0, 2730.0),
    (7.0, 6.0),
    (-3617.0, 510.0),
    (43867.0, 798.0),
    (-174611.0, 330.0),
    (854513.0, 138.0),
    (-236364091.0, 2730.0),
    (8553103.0, 6.0),
    (-23749461029.0, 870.0),
    (8615841276005.0, 14322.0),
];

// Below this the recurrence shifts the argument up before the asymptotic series.
const ASYMPTOTIC_FROM: f64 = 25.0;

fn bernoulli() -> &'static [Dd; 15] {
    static TABLE: OnceLock<[Dd; 15]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [Dd::ZERO; 15];
        for (slot, &(n, d)) in t.iter_mut().zip(BERNOULLI.iter()) {
            *slot = Dd::from_f64(n) / Dd::from_f64(d);
        }
        t
    })
}

fn check_pole(function: &'static str, x: f64) -> Result<()> {
    let r = x.round();
    if r <= 0.0 && (x - r).abs() <= 1e-12 {
        return Err(Error::PoleArgument { function, x });
    }
    Ok(())
}

fn stirling(z: Dd) -> Dd {
    let b = bernoulli();
    let inv = z.recip();
    let inv2 = inv.sqr();
    let mut p = inv;
    let mut corr = Dd::ZERO;
    for (k, bk) in b.iter().enumerate() {
        let k2 = 2.0 * (k as f64 + 1.0);
        corr += *bk * p / (k2 * (k2 - 1.0));
        p *= inv2;
    }
    (z - 0.5) * z.ln() - z + Dd::HALF_LN_2PI + corr
}

fn ln_gamma_positive(x: Dd) -> Dd {
    let mut z = x;
    let mut prod = Dd::ONE;
    while z.hi() < ASYMPTOTIC_FROM {
        prod *= z;
        z += Dd::ONE;
    }
    if prod == Dd::ONE {
        stirling(z)
    } else {
        stirling(z) - prod.ln()
    }
}

/// `(ln|Γ(x)|, sign Γ(x))` in double-double precision.
pub(crate) fn ln_gamma_dd(x: Dd) -> Result<(Dd, f64)> {
    check_pole("ln_gamma", x.to_f64())?;
    if x.hi() > 0.0 {
        return Ok((ln_gamma_positive(x), 1.0));
    }
    // Γ(x) Γ(1-x) = π / sin(πx), with Γ(1-x) > 0 here.
    let (s, _) = x.sin_cos_pi();
    let ln_abs = Dd::PI.ln() - s.abs().ln() - ln_gamma_positive(Dd::ONE - x);
    Ok((ln_abs, s.signum()))
}

/// ψ(x) in double-double precision.
pub(crate) fn digamma_dd(x: Dd) -> Result<Dd> {
    check_pole("digamma", x.to_f64())?;
    if x.hi() <= 0.0 {
        // ψ(x) = ψ(1-x) - π cot(πx)
        let (s, c) = x.sin_cos_pi();
        return Ok(digamma_dd(Dd::ONE - x)? - Dd::PI * c / s);
    }
    let mut z = x;
    let mut shift = Dd::ZERO;
    while z.hi() < ASYMPTOTIC_FROM {
        shift += z.recip();
        z += Dd::ONE;
    }
    let b = bernoulli();
    let inv2 = z.recip().sqr();
    let mut p = inv2;
    let mut corr = Dd::ZERO;
    for (k, bk) in b.iter().enumerate() {
        let k2 = 2.0 * (k as f64 + 1.0);
        corr += *bk * p / k2;
        p *= inv2;
    }
    Ok(z.ln() - z.recip().ldexp(-1) - corr - shift)
}

/// Digamma function ψ(x).
pub fn digamma(x: f64) -> Result<f64> {
    Ok(digamma_dd(Dd::from_f64(x))?.to_f64())
}

/// `(ln|Γ(x)|, sign)` with `sign * exp(ln|Γ(x)|) = Γ(x)`. Negative arguments go
/// through the reflection formula so Γ of large negative non-integers stays
/// representable.
pub fn ln_gamma_signed(x: f64) -> Result<(f64, f64)> {
    let (l, s) = ln_gamma_dd(Dd::from_f64(x))?;
    Ok((l.to_f64(), s))
}

/// ln Γ(x) for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("ln_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma_positive(Dd::from_f64(x)).to_f64())
}

/// Rising factorial (a)_k.
pub fn pochhammer(a: f64, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (a + j as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER: f64 = 0.577_215_664_901_532_9;

    #[test]
    fn digamma_known_values() {
        assert!((digamma(1.0).unwrap() + EULER).abs() < 1e-16);
        assert!((digamma(2.0).unwrap() - (1.0 - EULER)).abs() < 1e-16);
        assert!((digamma(0.5).unwrap() + 1.963_510_026_021_423_5).abs() < 1e-15);
        // ψ(-0.5) = ψ(1.5) + 2 = 2 - γ - 2 ln 2 + 2... via reflection: ψ(-1/2) = 0.03648997397857652
        assert!((digamma(-0.5).unwrap() - 0.036_489_973_978_576_52).abs() < 1e-15);
    }

    #[test]
    fn digamma_rejects_poles() {
        assert!(matches!(digamma(0.0), Err(Error::PoleArgument { .. })));
        assert!(matches!(digamma(-3.0 + 1e-13), Err(Error::PoleArgument { .. })));
        assert!(digamma(-3.0 + 1e-6).is_ok());
    }

    #[test]
    fn digamma_relative_accuracy_over_wide_range() {
        // ψ(1e-6) = -1e6 - γ + (π²/6) 1e-6 + ...
        let v = digamma(1e-6).unwrap();
        let expect = -1e6 - EULER + 1.644_934_066_848_226_4e-6;
        assert!(((v - expect) / expect).abs() < 1e-13);
        // ψ(1e6) = ln(1e6) - 1/(2e6) - 1/(12e12) + ...
        let v = digamma(1e6).unwrap();
        let expect = (1e6f64).ln() - 5e-7 - 1.0 / 12e12;
        assert!(((v - expect) / expect).abs() < 1e-13);
    }

    #[test]
    fn ln_gamma_signed_examples() {
        let (l, s) = ln_gamma_signed(5.0).unwrap();
        assert_eq!(s, 1.0);
        assert!((l - 24f64.ln()).abs() < 1e-15);
        let (l, s) = ln_gamma_signed(0.5).unwrap();
        assert_eq!(s, 1.0);
        assert!((l - std::f64::consts::PI.sqrt().ln()).abs() < 1e-15);
        // Γ(-2.5) = -8√π/15, frozen from the reflection formula
        let (l, s) = ln_gamma_signed(-2.5).unwrap();
        assert_eq!(s, -1.0);
        let expect = (8.0 * std::f64::consts::PI.sqrt() / 15.0).ln();
        assert!((l - expect).abs() < 1e-15);
        assert!((l + 0.056_243_716_497_674_054).abs() < 1e-15);
        assert!(ln_gamma_signed(-4.0).is_err());
    }

    #[test]
    fn ln_gamma_large_negative_stays_finite() {
        // Γ(0.3 - 200) would underflow as a plain double
        let (l, s) = ln_gamma_signed(0.3 - 200.0).unwrap();
        assert!(l.is_finite() && l < -700.0);
        assert_eq!(s, 1.0); // 200 sign flips from (0.3, 1): even
    }

    #[test]
    fn pochhammer_examples() {
        assert_eq!(pochhammer(7.3, 0), 1.0);
        assert_eq!(pochhammer(3.0, 2), 12.0);
        assert_eq!(pochhammer(-2.0, 3), 0.0);
    }

    #[test]
    fn dd_digamma_at_integers_matches_harmonic_numbers() {
        let mut h = Dd::ZERO;
        for n in 1..60u32 {
            let psi = digamma_dd(Dd::from_f64(n as f64)).unwrap();
            let expect = h - Dd::EULER_GAMMA;
            assert!((psi - expect).abs().to_f64() < 1e-29, "n = {n}");
            h += Dd::from_f64(n as f64).recip();
        }
    }

    #[test]
    fn dd_ln_gamma_matches_factorials() {
        let mut f = Dd::ONE;
        for n in 1..80u32 {
            let (lg, _) = ln_gamma_dd(Dd::from_f64(n as f64 + 1.0)).unwrap();
            f *= Dd::from_f64(n as f64);
            let err = (lg - f.ln()).abs().to_f64();
            assert!(err < 1e-29 * f.ln().to_f64().max(1.0), "n = {n}: {err:e}");
        }
    }
}
