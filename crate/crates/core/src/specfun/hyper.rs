use super::sum::{Accumulator, Partial};
use super::{ln_gamma, SeriesValue, TruncationPolicy};
use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::real::Real;

fn ensure_finite(what: &'static str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what}: non-finite argument")))
    }
}

fn tail_with_floor(last: f64, ratio: f64, floor: f64) -> f64 {
    let r = ratio.max(floor);
    if last == 0.0 {
        0.0
    } else if r < 1.0 {
        last * r / (1.0 - r)
    } else {
        f64::INFINITY
    }
}

fn done<T: Real>(acc: &Accumulator<T>, tail: f64, policy: &TruncationPolicy, small_run_ok: bool) -> bool {
    small_run_ok && acc.settled_with_tail(tail, policy)
}

/// Direct Gauss series. Terminates at the first nonpositive-integer
/// numerator parameter.
pub(crate) fn hyp2f1_series<T: Real>(
    a: T,
    b: T,
    c: T,
    z: T,
    policy: &TruncationPolicy,
    what: &'static str,
) -> Result<Partial<T>> {
    let stop = [a, b].iter().filter_map(|x| x.as_nonpositive_integer()).min();
    if let Some(nc) = c.as_nonpositive_integer() {
        if stop.map_or(true, |n| n > nc) {
            return Err(Error::PoleArgument {
                function: what,
                x: c.to_f64(),
            });
        }
    }
    let zm = z.mag();
    if stop.is_none() && zm >= 1.0 {
        return Err(Error::Domain(format!("{what}: |z| = {zm} must be < 1")));
    }
    // past this index the term ratio is monotone and below one
    let settle_from = (a.mag() + b.mag() + c.mag()) as usize + 2;
    let mut acc = Accumulator::new(policy);
    let mut t = T::one();
    let mut k = 0u64;
    loop {
        acc.push(t, policy);
        if Some(k) == stop {
            return Ok(acc.finish_with_tail(0.0));
        }
        let kf = T::from_f64(k as f64);
        let k1 = T::from_f64(k as f64 + 1.0);
        let next = t * (a + kf) * (b + kf) * z / ((c + kf) * k1);
        if stop.is_none() {
            let ratio = if t.mag() > 0.0 { next.mag() / t.mag() } else { 0.0 };
            let tail = tail_with_floor(next.mag(), ratio, zm) + next.mag();
            if done(&acc, tail, policy, k as usize >= settle_from) {
                return Ok(acc.finish_with_tail(tail));
            }
            if acc.terms() >= policy.max_terms {
                return Err(Error::NonConvergence {
                    what,
                    terms: acc.terms(),
                });
            }
        }
        t = next;
        acc.rescale(&mut t, policy);
        k += 1;
    }
}

/// Terminating `2F1(a, -n; c; z)` for `z < 1`, choosing between the direct
/// sum and the Pfaff-transformed sum by estimated error.
pub(crate) fn hyp2f1_terminating<T: Real>(a: T, n: u64, c: T, z: T) -> Result<Partial<T>> {
    let policy = TruncationPolicy::working_precision();
    let b = T::from_f64(-(n as f64));
    let direct = hyp2f1_series(a, b, c, z, &policy, "gauss_2f1");
    if z.to_f64() >= 1.0 || n == 0 {
        return direct;
    }
    let one = T::one();
    let w = z / (z - one);
    let pfaff = hyp2f1_series(c - a, b, c, w, &policy, "gauss_2f1")
        .map(|p| p.with_factor(T::from_f64(n as f64) * (one - z).ln()));
    match (direct, pfaff) {
        (Ok(d), Ok(p)) => Ok(if p.rel_err() < d.rel_err() { p } else { d }),
        (Ok(d), Err(_)) => Ok(d),
        (Err(_), Ok(p)) => Ok(p),
        (Err(e), Err(_)) => Err(e),
    }
}

/// `2F1(a, b; c; z) = (1-z)^(c-a-b) 2F1(c-a, c-b; c; z)`.
pub(crate) fn hyp2f1_euler<T: Real>(a: T, b: T, c: T, z: T, policy: &TruncationPolicy) -> Result<Partial<T>> {
    let one = T::one();
    let p = hyp2f1_series(c - a, c - b, c, z, policy, "gauss_2f1")?;
    Ok(p.with_factor((c - a - b) * (one - z).ln()))
}

/// `d/db 2F1(a, b; c; z)` at `b = -n`, through the Euler transform:
/// `(1-z)^(c-a+n) sum_k u_k (-ln(1-z) - H_k)` with
/// `u_k = (c-a)_k (c+n)_k z^k / ((c)_k k!)` and `H_k = sum_{j<k} 1/(c+n+j)`.
pub(crate) fn hyp2f1_db_neg_int_euler<T: Real>(
    a: T,
    n: u64,
    c: T,
    z: T,
    policy: &TruncationPolicy,
) -> Result<Partial<T>> {
    let what = "gauss_2f1_db_at_neg_int";
    let zm = z.mag();
    if !(z.to_f64() < 1.0) || zm >= 1.0 {
        return Err(Error::Domain(format!("{what}: |z| = {zm} must be < 1")));
    }
    let one = T::one();
    let nf = T::from_f64(n as f64);
    let alpha = c - a;
    let beta = c + nf;
    let stop = alpha.as_nonpositive_integer();
    let l = -(one - z).ln();
    let settle_from = (alpha.mag() + beta.mag() + c.mag()) as usize + 2;
    let mut acc = Accumulator::new(policy);
    let mut u = one;
    let mut h = T::zero();
    let mut k = 0u64;
    loop {
        acc.rescale(&mut u, policy);
        acc.push(u * (l - h), policy);
        if Some(k) == stop {
            return Ok(acc.finish_with_tail(0.0).with_factor(-(alpha + nf) * l));
        }
        let kf = T::from_f64(k as f64);
        let k1 = T::from_f64(k as f64 + 1.0);
        let next = u * (alpha + kf) * (beta + kf) * z / ((c + kf) * k1);
        let h_next = h + one / (beta + kf);
        if stop.is_none() {
            let ratio = if u.mag() > 0.0 { next.mag() / u.mag() } else { 0.0 };
            // H_k grows like ln k; bound it by the next value plus a margin
            let weight = (l - h_next).mag() + 1.0 + (k as f64 + 2.0).ln();
            let tail = (tail_with_floor(next.mag(), ratio, zm) + next.mag()) * weight;
            if done(&acc, tail, policy, k as usize >= settle_from) {
                return Ok(acc.finish_with_tail(tail).with_factor(-(alpha + nf) * l));
            }
            if acc.terms() >= policy.max_terms {
                return Err(Error::NonConvergence {
                    what,
                    terms: acc.terms(),
                });
            }
        }
        u = next;
        h = h_next;
        k += 1;
    }
}

/// The defining two-part series for `d/db 2F1(a, b; c; z)` at `b = -n`.
fn hyp2f1_db_neg_int_direct<T: Real>(a: T, n: u64, c: T, z: T, policy: &TruncationPolicy) -> Result<Partial<T>> {
    let what = "gauss_2f1_db_at_neg_int";
    let zm = z.mag();
    if zm >= 1.0 {
        return Err(Error::Domain(format!("{what}: |z| = {zm} must be < 1")));
    }
    if let Some(nc) = c.as_nonpositive_integer() {
        if nc <= n {
            return Err(Error::PoleArgument {
                function: what,
                x: c.to_f64(),
            });
        }
    }
    let one = T::one();
    let nf = T::from_f64(n as f64);
    let mut acc = Accumulator::new(policy);
    // k <= n: p_k h_k with h_k = sum_{j<k} 1/(j - n)
    let mut p = one;
    let mut h = T::zero();
    for k in 0..=n {
        acc.rescale(&mut p, policy);
        acc.push(p * h, policy);
        if k < n {
            let kf = T::from_f64(k as f64);
            p = p * (a + kf) * (kf - nf) * z / ((c + kf) * T::from_f64(k as f64 + 1.0));
            h += one / (kf - nf);
        }
    }
    // p_n = (-1)^n (a)_n z^n / (c)_n
    let mut t = p * (a + nf) * z / ((c + nf) * (nf + one));
    let settle_from = (a.mag() + c.mag()) as usize + n as usize + 2;
    let mut k = n + 1;
    loop {
        acc.rescale(&mut t, policy);
        acc.push(t, policy);
        let kf = T::from_f64(k as f64);
        let next = t * (a + kf) * z * (kf - nf) / ((c + kf) * (kf + one));
        let ratio = if t.mag() > 0.0 { next.mag() / t.mag() } else { 0.0 };
        let tail = tail_with_floor(next.mag(), ratio, zm) + next.mag();
        if done(&acc, tail, policy, k as usize >= settle_from) {
            return Ok(acc.finish_with_tail(tail));
        }
        if acc.terms() >= policy.max_terms + n as usize {
            return Err(Error::NonConvergence {
                what,
                terms: acc.terms(),
            });
        }
        t = next;
        k += 1;
    }
}

/// Direct Kummer series `1F1(a; b; z)`.
pub(crate) fn hyp1f1_series<T: Real>(a: T, b: T, z: T, policy: &TruncationPolicy) -> Result<Partial<T>> {
    let what = "kummer_1f1";
    let stop = a.as_nonpositive_integer();
    if let Some(nb) = b.as_nonpositive_integer() {
        if stop.map_or(true, |n| n > nb) {
            return Err(Error::PoleArgument { function: what, x: b.to_f64() });
        }
    }
    let settle_from = (2.0 * z.mag() + a.mag() + b.mag()) as usize + 2;
    let mut acc = Accumulator::new(policy);
    let mut t = T::one();
    let mut k = 0u64;
    loop {
        acc.push(t, policy);
        if Some(k) == stop {
            return Ok(acc.finish_with_tail(0.0));
        }
        let kf = T::from_f64(k as f64);
        let next = t * (a + kf) * z / ((b + kf) * T::from_f64(k as f64 + 1.0));
        if stop.is_none() {
            let ratio = if t.mag() > 0.0 { next.mag() / t.mag() } else { 0.0 };
            let tail = tail_with_floor(next.mag(), ratio, 0.0) + next.mag();
            if done(&acc, tail, policy, k as usize >= settle_from) {
                return Ok(acc.finish_with_tail(tail));
            }
            if acc.terms() >= policy.max_terms {
                return Err(Error::NonConvergence {
                    what,
                    terms: acc.terms(),
                });
            }
        }
        t = next;
        acc.rescale(&mut t, policy);
        k += 1;
    }
}

/// `ln 1F1(a; b; z)` for fixed `a, b > 0` and `z >= 0`, switching to the
/// large-argument expansion when it converges to double precision.
#[derive(Debug, Clone, Copy)]
pub(crate) struct KummerScaled {
    a: f64,
    b: f64,
    ln_gamma_ratio: f64,
}

impl KummerScaled {
    const ASYMPTOTIC_FROM: f64 = 40.0;

    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::Domain(format!("scaled 1F1 requires a, b > 0 (got {a}, {b})")));
        }
        Ok(KummerScaled {
            a,
            b,
            ln_gamma_ratio: ln_gamma(b)? - ln_gamma(a)?,
        })
    }

    /// `(ln 1F1, terms summed)`.
    pub fn ln_eval(&self, z: f64) -> Result<(f64, usize)> {
        if z == 0.0 {
            return Ok((0.0, 1));
        }
        if z >= Self::ASYMPTOTIC_FROM {
            if let Some(v) = self.asymptotic(z) {
                return Ok(v);
            }
        }
        let policy = TruncationPolicy {
            rel_tol: 1e-17,
            abs_tol: 1e-300,
            max_terms: 100_000 + 4 * z as usize,
            consecutive_small: 2,
        };
        let p = hyp1f1_series(self.a, self.b, z, &policy)?;
        Ok((p.ln_abs(), p.terms))
    }

    fn asymptotic(&self, z: f64) -> Option<(f64, usize)> {
        let (p, q) = (self.b - self.a, 1.0 - self.a);
        let mut t = 1.0f64;
        let mut s = 1.0f64;
        for k in 0..200 {
            let kf = k as f64;
            let next = t * (p + kf) * (q + kf) / ((kf + 1.0) * z);
            if next == 0.0 || next.abs() < 1e-17 * s.abs() {
                return (s > 0.0).then(|| (z + (self.a - self.b) * z.ln() + self.ln_gamma_ratio + s.ln(), k + 1));
            }
            if next.abs() > t.abs() {
                return None;
            }
            s += next;
            t = next;
        }
        None
    }
}

fn to_series_value(p: Partial<Dd>) -> SeriesValue {
    let value = p.value().to_f64();
    let mag = value.abs();
    let mut out = SeriesValue {
        value,
        terms_used: p.terms,
        tail_estimate: p.tail * mag,
        max_term_ratio: p.max_ratio,
        rounding_error: (p.rounding * mag).max(f64::EPSILON * 0.5 * mag),
        converged: true,
        warnings: Vec::new(),
    };
    out.flag_precision();
    out
}

/// Gauss hypergeometric function `2F1(a, b; c; z)` for `|z| < 1`, or any `z`
/// when the series terminates. Summed in double-double precision; terminating
/// cases use whichever of the direct and Pfaff-transformed sums cancels less.
pub fn gauss_2f1(a: f64, b: f64, c: f64, z: f64, policy: &TruncationPolicy) -> Result<SeriesValue> {
    ensure_finite("gauss_2f1", &[a, b, c, z])?;
    policy.validate()?;
    // put the terminating parameter, if any, in b
    let (a, b) = match (a.as_nonpositive_integer(), b.as_nonpositive_integer()) {
        (Some(na), Some(nb)) if na < nb => (b, a),
        (Some(_), None) => (b, a),
        _ => (a, b),
    };
    if let Some(n) = b.as_nonpositive_integer() {
        if let Some(nc) = c.as_nonpositive_integer() {
            if n > nc {
                return Err(Error::PoleArgument { function: "gauss_2f1", x: c });
            }
        }
        if z < 1.0 && c.as_nonpositive_integer().is_none() {
            return hyp2f1_terminating(Dd::from(a), n, Dd::from(c), Dd::from(z)).map(to_series_value);
        }
    }
    hyp2f1_series(Dd::from(a), Dd::from(b), Dd::from(c), Dd::from(z), policy, "gauss_2f1").map(to_series_value)
}

/// Derivative of `2F1(a, b; c; z)` with respect to `b`, at `b = -n`, for
/// `|z| < 1`. The sum splits at `k = n`: below, the Pochhammer derivative
/// contributes a harmonic-type factor; above, every term carries the
/// surviving factor `(-1)^n n! (k-n-1)!`.
pub fn gauss_2f1_db_at_neg_int(a: f64, n: u32, c: f64, z: f64, policy: &TruncationPolicy) -> Result<SeriesValue> {
    ensure_finite("gauss_2f1_db_at_neg_int", &[a, c, z])?;
    policy.validate()?;
    hyp2f1_db_neg_int_direct(Dd::from(a), n as u64, Dd::from(c), Dd::from(z), policy).map(to_series_value)
}

/// Confluent hypergeometric function `1F1(a; b; z)`. Negative arguments use
/// Kummer's transformation `e^z 1F1(b-a; b; -z)` when it cancels less.
pub fn kummer_1f1(a: f64, b: f64, z: f64, policy: &TruncationPolicy) -> Result<SeriesValue> {
    ensure_finite("kummer_1f1", &[a, b, z])?;
    policy.validate()?;
    let (ad, bd, zd) = (Dd::from(a), Dd::from(b), Dd::from(z));
    let direct = hyp1f1_series(ad, bd, zd, policy);
    if z >= 0.0 || a.as_nonpositive_integer().is_some() {
        return direct.map(to_series_value);
    }
    let kummer = hyp1f1_series(bd - ad, bd, -zd, policy).map(|p| p.with_factor(zd));
    let best = match (direct, kummer) {
        (Ok(d), Ok(k)) => {
            if k.rel_err() < d.rel_err() {
                k
            } else {
                d
            }
        }
        (Ok(d), Err(_)) => d,
        (Err(_), Ok(k)) => k,
        (Err(e), Err(_)) => return Err(e),
    };
    Ok(to_series_value(best))
}
