use proptest::prelude::*;

use kmsprod::fading::{self, ShadowedParams};
use kmsprod::metrics::{self, RelayModel};
use kmsprod::oracle::{self, ConvolutionOracle};
use kmsprod::product::{self, CoefficientKind, GapCase, ProductDistribution, ProductModel};
use kmsprod::quad;
use kmsprod::specfun::{self, TruncationPolicy};

fn pol() -> TruncationPolicy {
    TruncationPolicy::default()
}

fn unit(k: f64, mu: f64, m: f64) -> ShadowedParams {
    ShadowedParams::unit(k, mu, m).unwrap()
}

fn model(p1: (f64, f64, f64), p2: (f64, f64, f64)) -> ProductModel {
    ProductModel::new(unit(p1.0, p1.1, p1.2), unit(p2.0, p2.1, p2.2)).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn link() -> impl Strategy<Value = ShadowedParams> {
    (0.0..10.0f64, 0.3..5.0f64, 0.3..20.0f64).prop_map(|(k, mu, m)| unit(k, mu, m))
}

/// `∫ x^(s-1) f(x) dx` in `t = ln x`.
fn mellin_by_quadrature<F: Fn(f64) -> f64>(pdf: F, s: f64, center: f64) -> f64 {
    quad::integrate_real_line(|t: f64| (s * t).exp() * pdf(t.exp()), center, 1.0, 1e-15, 1e-18, 400)
        .require("mellin")
        .unwrap()
}

// ---------- special functions ----------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn digamma_recurrence(x in 0.1..50.0f64) {
        let d = specfun::digamma(x + 1.0).unwrap() - specfun::digamma(x).unwrap() - 1.0 / x;
        prop_assert!(d.abs() <= 1e-12, "x={x} residual={d:e}");
    }

    #[test]
    fn gamma_reflection(x in -20.0..20.0f64) {
        prop_assume!((x - x.round()).abs() > 1e-3);
        let (l1, s1) = specfun::ln_gamma_signed(x).unwrap();
        let (l2, s2) = specfun::ln_gamma_signed(1.0 - x).unwrap();
        let sine = (std::f64::consts::PI * x).sin() / std::f64::consts::PI;
        let v = s1 * s2 * sine.signum() * (l1 + l2 + sine.abs().ln()).exp();
        prop_assert!((v - 1.0).abs() <= 1e-10, "x={x} v={v}");
    }

    #[test]
    fn euler_transformation(a in 0.1..4.0f64, b in -4.0..4.0f64, c in 0.2..6.0f64, z in -0.8..0.8f64) {
        let lhs = specfun::gauss_2f1(a, b, c, z, &pol()).unwrap();
        let rhs = specfun::gauss_2f1(c - a, c - b, c, z, &pol()).unwrap().value * (1.0 - z).powf(c - a - b);
        prop_assert!(rel(rhs, lhs.value) <= 1e-10, "lhs={} rhs={rhs}", lhs.value);
    }

    #[test]
    fn terminating_sums_are_exact(a in -5.0..5.0f64, n in 0u32..30, c in 0.2..6.0f64, z in -0.95..0.95f64) {
        let g = specfun::gauss_2f1(a, -(n as f64), c, z, &pol()).unwrap();
        prop_assert!(g.converged);
        prop_assert_eq!(g.tail_estimate, 0.0);
        prop_assert_eq!(g.terms_used, n as usize + 1);
        let k = specfun::kummer_1f1(-(n as f64), c, 20.0 * z, &pol()).unwrap();
        prop_assert!(k.converged);
        prop_assert_eq!(k.tail_estimate, 0.0);
        prop_assert_eq!(k.terms_used, n as usize + 1);
    }
}

#[test]
fn db_derivative_matches_finite_difference() {
    // Richardson-extrapolated central difference, summed far below the
    // default tolerance so the O(h) terms beyond k = n are not cut off
    let tight = TruncationPolicy::new(1e-16, 1e-300, 100_000, 3).unwrap();
    let f = |a, b, c, z| specfun::gauss_2f1(a, b, c, z, &tight).unwrap().value;
    let mut worst = 0.0f64;
    for a in [0.5, 1.0, 2.0, 5.0] {
        for n in [0u32, 1, 3, 7] {
            for c in [1.2, 3.0] {
                for z in [0.1, 0.5, 0.9] {
                    let b = -(n as f64);
                    let d = |h: f64| (f(a, b + h, c, z) - f(a, b - h, c, z)) / (2.0 * h);
                    let fd = (4.0 * d(5e-4) - d(1e-3)) / 3.0;
                    let exact = specfun::gauss_2f1_db_at_neg_int(a, n, c, z, &pol()).unwrap().value;
                    worst = worst.max(rel(fd, exact));
                }
            }
        }
    }
    assert!(worst <= 1e-6, "worst relative difference {worst:e}");
}

// ---------- single link ----------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn b_is_one_minus_c_to_the_m(p in link()) {
        let d = fading::derive_coeffs(&p).unwrap();
        prop_assert!(rel((1.0 - d.c).powf(p.m), d.b) <= 1e-12);
        prop_assert!((0.0..1.0).contains(&d.c));
    }

    #[test]
    fn single_pdf_nonnegative(p in link()) {
        for x in log_grid(1e-6, 1e3, 60) {
            let v = fading::pdf_single(&p, x).unwrap().value;
            prop_assert!(v >= 0.0 && v.is_finite(), "x={x} pdf={v}");
        }
    }

    #[test]
    fn single_scale_family(p in link(), g in 0.1..10.0f64, x in 0.01..10.0f64) {
        let scaled = ShadowedParams::new(p.kappa, p.mu, p.m, g).unwrap();
        let lhs = fading::pdf_single(&scaled, x).unwrap().value;
        let rhs = fading::pdf_single(&p, x / g).unwrap().value / g;
        prop_assume!(rhs > 1e-250);
        prop_assert!(rel(lhs, rhs) <= 1e-10, "lhs={lhs} rhs={rhs}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn single_mellin_matches_moments(p in link()) {
        for n in 1..=3 {
            let s = n as f64 + 1.0;
            let q = mellin_by_quadrature(|x| fading::pdf_single(&p, x).unwrap().value, s, 0.0);
            let exact = fading::mellin_single(&p, s).unwrap();
            prop_assert!(rel(q, exact) <= 1e-7, "n={n} quad={q} exact={exact}");
        }
    }
}

/// `cdf_single` tabulated on a fine log grid and interpolated linearly, so
/// a KS distance over a million draws costs a few thousand quadratures.
fn tabulated_cdf(p: &ShadowedParams) -> impl Fn(f64) -> kmsprod::Result<f64> + Sync {
    let xs = log_grid(1e-8, 1e3, 2201);
    let fs: Vec<f64> = xs.iter().map(|&x| fading::cdf_single(p, x).unwrap()).collect();
    move |x: f64| {
        if x <= xs[0] {
            return Ok(0.0);
        }
        if x >= xs[xs.len() - 1] {
            return Ok(1.0);
        }
        let i = xs.partition_point(|&v| v <= x) - 1;
        let w = (x.ln() - xs[i].ln()) / (xs[i + 1].ln() - xs[i].ln());
        Ok(fs[i] + w * (fs[i + 1] - fs[i]))
    }
}

#[test]
fn single_sampler_ks() {
    for (i, p) in [unit(2.1, 3.0, 0.8), unit(5.0, 1.2, 0.5), unit(0.0, 0.7, 1.0)].iter().enumerate() {
        let samples = oracle::sample_single_seeded(p, 17 + i as u64, 1_000_000).unwrap();
        let s = oracle::compare_ecdf(&samples, tabulated_cdf(p)).unwrap();
        assert!(s.ks_distance <= 5e-3, "{p:?}: KS {}", s.ks_distance);
    }
}

// ---------- product ----------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn swapping_links_changes_nothing(p in link(), q in link(), y in 0.01..5.0f64) {
        let ab = ProductModel::new(p, q).unwrap();
        let ba = ProductModel::new(q, p).unwrap();
        let f1 = product::pdf_product(&ab, y, &pol()).unwrap();
        let f2 = product::pdf_product(&ba, y, &pol()).unwrap();
        prop_assert!((f1.value - f2.value).abs() <= 1e-12 * f1.value.abs());
        let c1 = product::cdf_product(&ab, y, &pol()).unwrap();
        let c2 = product::cdf_product(&ba, y, &pol()).unwrap();
        prop_assert!((c1.value - c2.value).abs() <= 1e-12);
        prop_assert_eq!(product::moment_product(&ab, 2).unwrap(), product::moment_product(&ba, 2).unwrap());
    }

    #[test]
    fn coefficient_labels_follow_the_caller(p in link(), q in link(), n in 0usize..12) {
        let ab = ProductModel::new(p, q).unwrap();
        prop_assume!(ab.case() == GapCase::NonIntegerGap);
        let ba = ProductModel::new(q, p).unwrap();
        prop_assert_eq!(product::coeff_a(&ba, n).unwrap(), product::coeff_b(&ab, n).unwrap());
        prop_assert_eq!(product::coeff_b(&ba, n).unwrap(), product::coeff_a(&ab, n).unwrap());
    }

    #[test]
    fn product_scale_family(p in link(), q in link(), g1 in 0.2..5.0f64, g2 in 0.2..5.0f64, y in 0.02..3.0f64) {
        let unit_model = ProductModel::new(p, q).unwrap();
        let scaled = ProductModel::new(
            ShadowedParams::new(p.kappa, p.mu, p.m, g1).unwrap(),
            ShadowedParams::new(q.kappa, q.mu, q.m, g2).unwrap(),
        ).unwrap();
        let g = g1 * g2;
        let lhs = product::pdf_product(&scaled, y, &pol()).unwrap();
        let rhs = product::pdf_product(&unit_model, y / g, &pol()).unwrap();
        let tol = 1e-9 + lhs.relative_error_estimate() + rhs.relative_error_estimate();
        prop_assert!(rel(lhs.value, rhs.value / g) <= tol, "lhs={} rhs={}", lhs.value, rhs.value / g);
        let lc = product::cdf_product(&scaled, y, &pol()).unwrap();
        let rc = product::cdf_product(&unit_model, y / g, &pol()).unwrap();
        prop_assert!((lc.value - rc.value).abs() <= 1e-10 + lc.tail_estimate + lc.rounding_error + rc.tail_estimate + rc.rounding_error);
    }

    #[test]
    fn cdf_monotone_and_pdf_nonnegative(p in link(), q in link()) {
        let m = ProductModel::new(p, q).unwrap();
        let dist = ProductDistribution::new(m.clone(), pol()).unwrap();
        let mut prev = 0.0;
        for y in log_grid(1e-3, 10.0, 30) {
            let f = product::pdf_product(&m, y, &pol()).unwrap();
            prop_assert!(f.value >= -(f.tail_estimate + f.rounding_error), "y={y} pdf={:?}", f);
            let c = dist.cdf(y).unwrap();
            prop_assert!(c.value >= prev - c.error_estimate, "y={y} cdf={} prev={prev}", c.value);
            prop_assert!((0.0..=1.0 + c.error_estimate).contains(&c.value));
            prev = prev.max(c.value);
        }
    }
}

/// Sets covering both pole cases.
fn reference_models() -> Vec<ProductModel> {
    vec![
        model((5.0, 1.2, 0.5), (2.1, 3.0, 0.8)),
        model((5.0, 1.2, 1.3), (2.1, 3.0, 0.8)),
        model((1.0, 1.5, 2.0), (3.0, 3.5, 5.0)),
        model((0.7, 2.0, 1.5), (1.8, 2.0, 4.0)),
    ]
}

#[test]
fn normalization_and_mellin_round_trip() {
    for m in reference_models() {
        let dist = ProductDistribution::new(m.clone(), pol()).unwrap();
        let pdf = |y: f64| dist.pdf(y).unwrap().value;
        let total = mellin_by_quadrature(pdf, 1.0, 0.0);
        assert!((total - 1.0).abs() <= 1e-6, "{:?}: total {total}", m.case());
        for s in [1.5, 2.0, 2.5] {
            let q = mellin_by_quadrature(pdf, s, 0.0);
            let exact = product::mellin_product(&m, s).unwrap();
            assert!(rel(q, exact) <= 1e-6, "s={s}: quad {q} exact {exact}");
        }
    }
}

#[test]
fn cdf_is_integral_of_pdf() {
    for m in reference_models() {
        for y in [0.1f64, 0.5, 1.0, 2.0] {
            let q = quad::integrate(
                |t: f64| t.exp() * product::pdf_product(&m, t.exp(), &pol()).unwrap().value,
                y.ln() - 60.0,
                y.ln(),
                1e-14,
                1e-13,
                2000,
            )
            .require("cdf")
            .unwrap();
            let c = product::cdf_product(&m, y, &pol()).unwrap().value;
            assert!((q - c).abs() <= 1e-8, "y={y}: quad {q} series {c}");
        }
    }
}

#[test]
fn mgf_near_zero_and_finite_difference_mean() {
    for m in reference_models() {
        let dist = ProductDistribution::new(m.clone(), pol()).unwrap();
        assert!((dist.mgf(-1e-4).unwrap().value - 1.0).abs() <= 1e-3);
        for h in [1e-3, 1e-4] {
            let mean = (dist.mgf(-h).unwrap().value - 1.0) / -h;
            assert!(rel(mean, m.mean()) <= 10.0 * h * (1.0 + metrics::amount_of_fading(&m)), "h={h}: {mean}");
        }
        assert!(product::mgf_product(&m, 0.0, &pol()).is_err());
    }
}

#[test]
fn mixed_moment_is_large_m_limit() {
    let s = unit(5.0, 1.2, 0.5);
    for (k2, mu2) in [(2.1, 3.0), (0.0, 1.7), (4.0, 0.8)] {
        let km = unit(k2, mu2, 1.0);
        for n in 0..=4 {
            let limit = product::moment_product(&ProductModel::new(s, unit(k2, mu2, 1e6)).unwrap(), n).unwrap();
            let mixed = product::moment_mixed(&s, &km, n).unwrap();
            assert!(rel(mixed, limit) <= 1e-4, "n={n}: mixed {mixed} limit {limit}");
        }
    }
}

#[test]
fn leading_coefficients() {
    let m = model((0.0, 1.3, 2.0), (0.0, 2.9, 1.0));
    let l = (1.3f64 * 2.9).ln();
    let a0 = (1.3 * l).exp() * specfun::ln_gamma(1.6).unwrap().exp();
    assert!(rel(product::coeff_a(&m, 0).unwrap(), a0) <= 1e-13);
    let m = model((0.0, 1.3, 2.0), (0.0, 1.3, 1.0));
    let ln_l = 2.0 * 1.3f64.ln();
    let d0 = (1.3 * ln_l).exp();
    let c0 = d0 * (2.0 * specfun::digamma(1.0).unwrap() - ln_l);
    assert!(rel(product::coeff_d(&m, 0).unwrap(), d0) <= 1e-13);
    assert!(rel(product::coeff_c(&m, 0).unwrap(), c0) <= 1e-13);
    assert!(m.coefficient(CoefficientKind::A, 0).is_err());
    assert!(product::coeff_a(&model((1.0, 1.0, 1.0), (1.0, 3.0, 1.0)), 1).is_ok());
    assert!(product::coeff_c(&model((1.0, 1.0, 1.0), (1.0, 3.0, 1.0)), 1).is_err());
}

// ---------- metrics ----------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn outage_monotone_and_relay_dominates(p in link(), q in link(), sr in link()) {
        let m = ProductModel::new(p, q).unwrap();
        let relay = RelayModel::new(sr, m.clone()).unwrap();
        let mut prev = (0.0, 0.0);
        for t in log_grid(1e-3, 3.0, 20) {
            let op = metrics::op_cascade(&m, t, &pol()).unwrap();
            let r = metrics::op_relay_variable_gain(&relay, t, &pol()).unwrap();
            let slack = op.tail_estimate + op.rounding_error + r.tail_estimate + r.rounding_error;
            prop_assert!(op.value >= prev.0 - slack);
            prop_assert!(r.value >= prev.1 - slack);
            let f_sr = fading::cdf_single(&sr, t).unwrap();
            prop_assert!(r.value >= f_sr.max(op.value) - slack);
            prev = (op.value, r.value);
        }
    }

    #[test]
    fn af_and_cqei_match_moments(p in link(), q in link(), g1 in 0.2..5.0f64, g2 in 0.2..5.0f64) {
        let m = ProductModel::new(
            ShadowedParams::new(p.kappa, p.mu, p.m, g1).unwrap(),
            ShadowedParams::new(q.kappa, q.mu, q.m, g2).unwrap(),
        ).unwrap();
        let m1 = product::moment_product(&m, 1).unwrap();
        let m2 = product::moment_product(&m, 2).unwrap();
        let var = m2 - m1 * m1;
        prop_assert!(rel(metrics::amount_of_fading(&m), var / (m1 * m1)) <= 1e-10);
        prop_assert!(rel(metrics::cqei(&m), var / (m1 * m1 * m1)) <= 1e-10);
    }

    #[test]
    fn af_decreases_in_m(k1 in 0.05..10.0f64, mu1 in 0.3..5.0f64, k2 in 0.05..10.0f64, mu2 in 0.3..5.0f64) {
        let ms = [0.5, 1.0, 2.0, 5.0, 10.0];
        for w in ms.windows(2) {
            let lo = metrics::amount_of_fading(&model((k1, mu1, w[0]), (k2, mu2, 3.0)));
            let hi = metrics::amount_of_fading(&model((k1, mu1, w[1]), (k2, mu2, 3.0)));
            prop_assert!(hi < lo);
            let lo = metrics::amount_of_fading(&model((k1, mu1, 3.0), (k2, mu2, w[0])));
            let hi = metrics::amount_of_fading(&model((k1, mu1, 3.0), (k2, mu2, w[1])));
            prop_assert!(hi < lo);
        }
    }
}

// ---------- oracle ----------

#[test]
fn convolution_density_integrates_to_one() {
    for m in [model((5.0, 1.2, 0.5), (2.1, 3.0, 0.8)), model((0.7, 2.0, 1.5), (1.8, 2.0, 4.0))] {
        let o = ConvolutionOracle::new(&m).unwrap();
        let total = mellin_by_quadrature(|y| o.pdf(y).unwrap().value, 1.0, 0.0);
        assert!((total - 1.0).abs() <= 1e-7, "total {total}");
    }
}

#[test]
fn ecdf_edge_cases() {
    let s = oracle::compare_ecdf(&[1.0, 2.0, 3.0], |_| Ok(0.0)).unwrap();
    assert_eq!(s.ks_distance, 1.0);
    let s = oracle::compare_ecdf(&[1.0], |y| Ok(if y < 1.0 { 0.0 } else { 0.5 })).unwrap();
    assert!((s.ks_distance - 0.5).abs() < 1e-15);
    assert!(oracle::compare_ecdf(&[], |_| Ok(0.0)).is_err());
}

#[test]
fn parallel_sampling_is_thread_count_independent() {
    let m = model((5.0, 1.2, 0.5), (2.1, 3.0, 0.8));
    let a = oracle::sample_product_seeded(&m, 9, 150_000).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| oracle::sample_product_seeded(&m, 9, 150_000).unwrap());
    assert_eq!(a, b);
}
