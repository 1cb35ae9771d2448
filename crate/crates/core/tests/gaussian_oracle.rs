mod common;

use common::{rng, simpson_panels};
use proptest::prelude::*;
use rand::Rng;
use witsbench::gaussian::{integral_i1, integral_i2, std_normal_cdf, ExtReal, GaussianIntegralParams};

fn params(a: f64, b: f64, c: f64, lo: f64, hi: f64) -> GaussianIntegralParams {
    GaussianIntegralParams::new(a, b, c, ExtReal::Finite(lo), ExtReal::Finite(hi)).unwrap()
}

fn rel(x: f64, reference: f64) -> f64 {
    (x - reference).abs() / reference.abs().max(1e-30)
}

#[test]
fn closed_forms_match_quadrature() {
    let mut r = rng(2024);
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let a = r.random_range(0.1..5.0);
        let b = r.random_range(-3.0..3.0);
        let c = r.random_range(-3.0..3.0);
        let mut lo = r.random_range(-6.0..6.0);
        let mut hi = r.random_range(-6.0..6.0);
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        let p = params(a, b, c, lo, hi);
        let g = |x: f64| (-a * x * x + b * x + c).exp();
        let scale = simpson_panels(&g, lo, hi, 16, 1e-6).abs().max(1e-300);
        let q1 = simpson_panels(&g, lo, hi, 16, 1e-13 * scale);
        let q2 = simpson_panels(&|x| x * g(x), lo, hi, 16, 1e-13 * scale);
        let e1 = rel(integral_i1(&p).unwrap(), q1);
        let e2 = rel(integral_i2(&p).unwrap(), q2);
        worst = (worst.0.max(e1), worst.1.max(e2));
        assert!(e1 < 1e-9, "I1 a={a} b={b} c={c} [{lo}, {hi}]: rel {e1}");
        assert!(e2 < 1e-9, "I2 a={a} b={b} c={c} [{lo}, {hi}]: rel {e2}");
    }
    eprintln!("worst relative errors: I1 {:e}, I2 {:e}", worst.0, worst.1);
}

#[test]
fn infinite_limits_match_truncated_quadrature() {
    let (a, b, c) = (0.7, 1.3, -0.4);
    let p = GaussianIntegralParams::new(a, b, c, ExtReal::NegInf, ExtReal::Finite(0.5)).unwrap();
    let g = |x: f64| (-a * x * x + b * x + c).exp();
    let q = simpson_panels(&g, -40.0, 0.5, 64, 1e-15);
    assert!(rel(integral_i1(&p).unwrap(), q) < 1e-10);
    let q2 = simpson_panels(&|x| x * g(x), -40.0, 0.5, 64, 1e-15);
    assert!(rel(integral_i2(&p).unwrap(), q2) < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn i1_monotone_in_upper_limit(
        a in 0.1f64..5.0, b in -3.0f64..3.0, c in -3.0f64..3.0,
        lo in -6.0f64..6.0, d1 in 0.0f64..6.0, d2 in 0.0f64..6.0,
    ) {
        let v1 = integral_i1(&params(a, b, c, lo, lo + d1.min(d2))).unwrap();
        let v2 = integral_i1(&params(a, b, c, lo, lo + d1.max(d2))).unwrap();
        prop_assert!(v2 >= v1);
    }

    #[test]
    fn i1_is_additive(
        a in 0.1f64..5.0, b in -3.0f64..3.0, c in -3.0f64..3.0,
        x in -6.0f64..6.0, y in -6.0f64..6.0, t in 0.0f64..1.0,
    ) {
        let (lo, hi) = (x.min(y), x.max(y));
        let m = lo + t * (hi - lo);
        let whole = integral_i1(&params(a, b, c, lo, hi)).unwrap();
        let parts = integral_i1(&params(a, b, c, lo, m)).unwrap() + integral_i1(&params(a, b, c, m, hi)).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-12 * whole.abs().max(1e-300));
    }

    #[test]
    fn cdf_is_symmetric(x in -8.0f64..8.0) {
        let s = std_normal_cdf(x).unwrap() + std_normal_cdf(-x).unwrap();
        prop_assert!((s - 1.0).abs() <= 1e-15);
    }
}
