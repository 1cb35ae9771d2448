mod common;

use common::cfg;
use proptest::prelude::*;
use witsbench::costs::estimation_cost;
use witsbench::optimizer::{
    optimize_at, optimize_at_power, sweep, FreeParams, Init, OptimizeOptions, SweepOptions, WeightedObjective,
};
use witsbench::QuadratureConfig;

fn quick(restarts: usize) -> OptimizeOptions {
    OptimizeOptions {
        restarts,
        ..OptimizeOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn every_free_vector_decodes(n in 1usize..7, raw in prop::collection::vec(-50.0f64..50.0, 13)) {
        let fp = FreeParams(raw[..2 * n - 1].to_vec());
        let p = fp.decode().unwrap();
        prop_assert_eq!(p.steps(), n);
        prop_assert_eq!(p.breakpoints()[0], 0.0);
        prop_assert!(p.amplitudes().windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(p.breakpoints().windows(2).all(|w| w[0] <= w[1]));
        let back = FreeParams::encode(&p).decode().unwrap();
        for (x, y) in back.amplitudes().iter().zip(p.amplitudes()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
        for (x, y) in back.breakpoints().iter().zip(p.breakpoints()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}

#[test]
fn more_steps_never_hurt() {
    let c = cfg(1.0, 0.1);
    let qc = QuadratureConfig::default();
    for omega in [0.1, 0.3] {
        let two = optimize_at(&WeightedObjective::new(omega, 2, c, qc).unwrap(), &quick(4)).unwrap();
        let o = OptimizeOptions {
            init: Init::Warm(two.params.clone()),
            ..quick(2)
        };
        let four = optimize_at(&WeightedObjective::new(omega, 4, c, qc).unwrap(), &o).unwrap();
        assert!(four.objective_value <= two.objective_value + 1e-10, "ω={omega}");
        // the padded controller reproduces the 2-step costs
        let padded = estimation_cost(&two.params.pad_to(4), &c, &qc).unwrap();
        assert!((padded.estimation - two.point.estimation).abs() < 1e-10);
        assert!((padded.power - two.point.power).abs() < 1e-10);
    }
}

#[test]
fn reported_point_is_recomputable() {
    let c = cfg(1.0, 0.1);
    let qc = QuadratureConfig::default();
    let rec = optimize_at(&WeightedObjective::new(0.2, 3, c, qc).unwrap(), &quick(3)).unwrap();
    let again = estimation_cost(&rec.params, &c, &qc).unwrap();
    assert!((again.power - rec.point.power).abs() < 1e-10);
    assert!((again.estimation - rec.point.estimation).abs() < 1e-10);
    let v = 0.2 * again.power + 0.8 * again.estimation;
    assert!((v - rec.objective_value).abs() < 1e-10);
}

#[test]
fn power_target_is_met() {
    let c = cfg(1.0, 0.1);
    let qc = QuadratureConfig::default();
    let r = optimize_at_power(2, &c, &qc, 0.3, &[], &quick(3)).unwrap();
    assert!((r.point.power - 0.3).abs() < 1e-9);
    assert!(r.point.estimation < witsbench::costs::linear_cost(0.3, &c).unwrap());
}

#[test]
fn sweep_is_continuous_and_concave() {
    let c = cfg(1.0, 0.1);
    let qc = QuadratureConfig::default();
    let omegas: Vec<f64> = (0..11).map(|i| 0.05 + 0.09 * i as f64).collect();
    let opts = SweepOptions {
        first: quick(4),
        warm_restarts: 2,
    };
    let s = sweep(1, &c, &qc, &omegas, &opts).unwrap();
    assert!(s.continuity_violations().is_empty(), "{:?}", s.continuity_violations());
    // minimum of affine functions of ω
    let v: Vec<f64> = s.records.iter().map(|r| r.objective_value).collect();
    for w in v.windows(3) {
        assert!(w[1] >= 0.5 * (w[0] + w[2]) - 1e-7, "{v:?}");
    }
    // power decreases as it gets more expensive
    for w in s.records.windows(2) {
        assert!(w[1].point.power <= w[0].point.power + 1e-6);
    }
}
