mod common;

use std::f64::consts::PI;

use probekit::curvelet::CurveletPlan;
use probekit::mse;

#[test]
fn tight_frame_at_128() {
    let plan = CurveletPlan::new(128).unwrap();
    let f = common::white(128, 11);
    let c = plan.analyze(&f).unwrap();
    assert!((c.energy() - f.norm_sq()).abs() <= 1e-10 * f.norm_sq());
    assert!(mse(&f, &plan.synthesize(&c).unwrap()).unwrap() <= 1e-10);
}

#[test]
fn atom_norms_constant_per_wedge() {
    let plan = CurveletPlan::new(64).unwrap();
    for id in (0..plan.len()).step_by(97) {
        let a = plan.atom(id);
        assert_eq!(a.norm, plan.wedges()[a.wedge].atom_norm);
        assert!(a.norm <= 1.0);
    }
}

#[test]
fn diagonal_approximation_improves_with_frequency() {
    let plan = CurveletPlan::new(128).unwrap();
    for angular in [false, true] {
        let errs: Vec<f64> = [8.0, 16.0]
            .iter()
            .map(|&bins| {
                let k_min = 2.0 * PI * bins;
                let f = common::annulus(128, k_min, 2.0 * k_min, 7);
                plan.diag_approx_error(common::test_symbol(angular), &f, k_min).unwrap()
            })
            .collect();
        assert!(errs[1] <= 0.85 * errs[0], "angular={angular}: {errs:?}");
    }
}
