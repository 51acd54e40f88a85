//! Adaptive Gauss–Kronrod (G10/K21) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_067_425_415,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl Quadrature {
    pub fn require(self, what: &'static str) -> Result<f64> {
        if self.converged && self.value.is_finite() {
            Ok(self.value)
        } else {
            Err(Error::QuadratureFailure {
                what,
                abs_error: self.abs_error,
            })
        }
    }

    fn add(&mut self, other: Quadrature) {
        self.value += other.value;
        self.abs_error += other.abs_error;
        self.evaluations += other.evaluations;
        self.converged &= other.converged;
    }
}

/// One 21-point Kronrod panel: (integral, error estimate).
pub fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = fc * WGK[10];
    let mut resg = 0.0;
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = resk * 0.5;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (result, err)
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive integration over `[a, b]`, bisecting the panel with the
/// largest error until the total error is below `max(abs_tol, rel_tol |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Quadrature {
    if a == b {
        return Quadrature {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
            converged: true,
        };
    }
    let (v, e) = gk21(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    let mut total = v;
    let mut total_err = e;
    let mut evaluations = 21;
    let mut splits = 0;
    while total_err > abs_tol.max(rel_tol * total.abs()) && splits < max_subdivisions {
        let Some(seg) = heap.pop() else { break };
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a.min(seg.b) || mid >= seg.a.max(seg.b) {
            // interval exhausted at double resolution
            heap.push(seg);
            break;
        }
        let (v1, e1) = gk21(&f, seg.a, mid);
        let (v2, e2) = gk21(&f, mid, seg.b);
        evaluations += 42;
        splits += 1;
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.error;
        heap.push(Segment { a: seg.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: seg.b, value: v2, error: e2 });
    }
    // re-sum to shed drift from the running updates
    let (value, abs_error) = heap.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
    Quadrature {
        value,
        abs_error,
        evaluations,
        converged: abs_error <= abs_tol.max(rel_tol * value.abs()) && value.is_finite(),
    }
}

/// `∫_start^∞ f` over panels of doubling width, stopping once two
/// consecutive panels each contribute less than `tail_tol`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, start: f64, first_width: f64, abs_tol: f64, tail_tol: f64) -> Quadrature {
    let mut out = Quadrature {
        value: 0.0,
        abs_error: 0.0,
        evaluations: 0,
        converged: true,
    };
    let mut lo = start;
    let mut width = first_width;
    let mut quiet = 0;
    for _ in 0..200 {
        let hi = lo + width;
        let q = integrate(&f, lo, hi, abs_tol, 1e-13, 500);
        let small = q.value.abs() < tail_tol;
        out.add(q);
        quiet = if small { quiet + 1 } else { 0 };
        if quiet >= 2 {
            return out;
        }
        lo = hi;
        width *= 2.0;
        if !lo.is_finite() {
            break;
        }
    }
    out.converged = false;
    out
}

/// `∫ f` over the real line for an integrand concentrated near `center`,
/// walking fixed-width panels outward in both directions until each side
/// has produced two consecutive panels below `tail_tol`.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, center: f64, width: f64, abs_tol: f64, tail_tol: f64, max_panels: usize) -> Quadrature {
    let mut out = integrate(&f, center - 0.5 * width, center + 0.5 * width, abs_tol, 1e-13, 500);
    for dir in [1.0, -1.0] {
        let mut edge = center + dir * 0.5 * width;
        let mut quiet = 0;
        let mut done = false;
        for _ in 0..max_panels {
            let next = edge + dir * width;
            let q = integrate(&f, edge.min(next), edge.max(next), abs_tol, 1e-13, 500);
            let small = q.value.abs() < tail_tol;
            out.add(q);
            quiet = if small { quiet + 1 } else { 0 };
            edge = next;
            if quiet >= 2 {
                done = true;
                break;
            }
        }
        out.converged &= done;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact_on_one_panel() {
        let (v, _) = gk21(&|x: f64| x.powi(20), 0.0, 1.0);
        assert!((v - 1.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let q = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, 1e-12, 1e-12, 1000);
        assert!(q.converged);
        assert!((q.value - 2.0).abs() < 1e-10);
    }

    #[test]
    fn semi_infinite_exponential() {
        let q = integrate_to_infinity(|x: f64| (-x).exp(), 0.0, 1.0, 1e-14, 1e-16);
        assert!((q.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn real_line_gaussian() {
        let q = integrate_real_line(|t: f64| (-(t - 3.0) * (t - 3.0)).exp(), 3.0, 1.0, 1e-14, 1e-17, 100);
        assert!(q.converged);
        assert!((q.value - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }
}
