mod common;

use std::sync::Arc;

use common::{cfg, simpson_panels};
use witsbench::costs::{conditional_mean, linear_cost, linear_cost_slope, observation_density};
use witsbench::firstorder::{bpsk_decomposition, bpsk_slope, slope_diagnostic, t1, SlopeTag};
use witsbench::montecarlo::{simulate, Decoder, SimConfig};
use witsbench::{LopeParams, QuadratureConfig, Strategy};

#[test]
fn decomposition_is_exact() {
    let c = cfg(1.0, 0.1);
    let qc = QuadratureConfig::default();
    for a in [0.0, 0.1, 0.4, 1.0] {
        let d = bpsk_decomposition(a, &c, &qc).unwrap();
        assert!(d.residual() < 1e-8, "a={a}: {}", d.residual());
        let p = LopeParams::bpsk(a).unwrap();
        let integrand = |y: f64| {
            let m = conditional_mean(&p, &c, y).unwrap();
            m * m * observation_density(&p, &c, y).unwrap()
        };
        let t2 = simpson_panels(&integrand, -14.0, 14.0, 56, 1e-13);
        assert!((t2 - d.t2).abs() < 1e-9, "a={a}: {t2} vs {}", d.t2);
    }
}

#[test]
fn t1_is_the_state_second_moment() {
    let c = cfg(1.0, 0.1);
    for (k, a) in [0.1, 0.4, 1.0].into_iter().enumerate() {
        let zero = Decoder::Custom(Arc::new(|_| 0.0));
        let res = simulate(&Strategy::Bpsk { a }, &c, &SimConfig::new(400_000, k as u64), &zero).unwrap();
        assert!((res.s_hat - t1(a, &c)).abs() < 4.0 * res.s_stderr);
    }
}

#[test]
fn estimator_power_falls_off_at_the_origin() {
    // T2 decreases for small a, so dS/da(0) is smaller in magnitude than -dT1/da(0)
    let c = cfg(1.0, 0.1);
    let qc = QuadratureConfig::default();
    let t2 = |a: f64| bpsk_decomposition(a, &c, &qc).unwrap().t2;
    assert!(t2(0.01) < t2(0.0));
    assert!(t2(0.02) < t2(0.01));
    let ds = bpsk_slope(1e-6, &c, &qc).unwrap() * 2.0 * 1e-3;
    let dt1 = -2.0 * (2.0 / std::f64::consts::PI).sqrt();
    assert!(ds < 0.0 && ds > dt1);
}

#[test]
fn bpsk_slope_converges_in_step() {
    let c = cfg(1.0, 0.1);
    let qc = QuadratureConfig::default();
    let a = 0.3;
    let s = |x: f64| bpsk_decomposition(x, &c, &qc).unwrap().s;
    let d = |h: f64| (s(a + h) - s(a - h)) / (2.0 * h);
    let (d1, d2, d3) = (d(4e-2), d(2e-2), d(1e-2));
    let ratio = (d1 - d2) / (d2 - d3);
    assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
    let fine = bpsk_slope(a * a, &c, &qc).unwrap() * 2.0 * a;
    assert!((fine - (d3 + (d3 - d2) / 3.0)).abs() < 1e-6);
}

#[test]
fn linear_slope_is_negative_and_diverges() {
    let c = cfg(1.0, 0.1);
    let grid: Vec<f64> = (1..50).map(|i| 0.01 * i as f64).collect();
    let slopes: Vec<f64> = grid.iter().map(|&p| linear_cost_slope(p, &c).unwrap()).collect();
    assert!(slopes.iter().all(|s| *s < 0.0));
    let small: Vec<f64> = (2..9).map(|k| linear_cost_slope(10f64.powi(-k), &c).unwrap()).collect();
    assert!(small.windows(2).all(|w| w[1] < w[0]));
    for (&p, &s) in grid.iter().zip(&slopes) {
        let h = 1e-5 * p;
        let fd = (linear_cost(p + h, &c).unwrap() - linear_cost(p - h, &c).unwrap()) / (2.0 * h);
        assert!((fd - s).abs() < 1e-6 * s.abs(), "P={p}");
    }
}

#[test]
fn bpsk_slopes_diverge() {
    let c = cfg(1.0, 0.1);
    let qc = QuadratureConfig::default();
    let d = slope_diagnostic(SlopeTag::Bpsk, &c, &[1e-2, 1e-3, 1e-4, 1e-5], &qc).unwrap();
    assert!(d.divergence_certified());
    // the magnitude grows towards √10 per decade from below
    assert!(d.divergence_ratio.windows(2).all(|w| w[1] > w[0]));
    assert!(d.divergence_ratio.iter().all(|r| *r < 10f64.sqrt()));
}
