mod common;

use probekit::assets::marmousi_blend;
use probekit::curvelet::CurveletPlan;
use probekit::illumination::{build_mask, Illuminator, RayTracer, SpeedField, VisibilityConfig};

#[test]
fn constant_medium_matches_mirror_oracle() {
    let n = 32;
    let plan = CurveletPlan::new(n).unwrap();
    let field = SpeedField::constant(1.0).unwrap();
    let cfg = VisibilityConfig::new(&plan, &field);
    let geom = common::surface(n, &[0.1, 0.5, 0.9]);
    let mask = build_mask(&plan, &field, &geom, &cfg).unwrap();
    let agree = (0..plan.len())
        .filter(|&id| {
            let a = plan.atom(id);
            mask.get(id) == common::oracle(a.x, a.k, &geom, &cfg, 1.0)
        })
        .count();
    assert!(agree as f64 >= 0.99 * plan.len() as f64, "{agree} of {}", plan.len());
    let frac = mask.count() as f64 / plan.len() as f64;
    assert!(frac > 0.0 && frac < 1.0);
    // horizontal wavevectors are only seen right under the surface
    for id in 0..plan.len() {
        let a = plan.atom(id);
        if a.k.1 == 0.0 && a.k.0 != 0.0 && a.x.1 > 0.35 {
            assert!(!mask.get(id), "{a:?}");
        }
    }
}

#[test]
fn tilted_normal_with_left_sources() {
    let n = 64;
    let plan = CurveletPlan::new(n).unwrap();
    let field = SpeedField::constant(1.0).unwrap();
    let cfg = VisibilityConfig::new(&plan, &field);
    let geom = common::surface(n, &[0.05, 0.15, 0.25]);
    let ill = Illuminator::new(&field, &geom, &cfg).unwrap();
    let th = 30f64.to_radians();
    let mut seen = 0;
    for k in [(th.sin(), -th.cos()), (-th.sin(), -th.cos())] {
        for i in 1..8 {
            for j in 2..8 {
                let x = (i as f64 / 8.0, j as f64 / 8.0);
                let v = ill.visible(x, k);
                assert_eq!(v, common::oracle(x, k, &geom, &cfg, 1.0), "x={x:?} k={k:?}");
                seen += v as usize;
            }
        }
    }
    assert!(seen > 0 && seen < 2 * 7 * 6);
}

#[test]
fn hamiltonian_conserved_and_rays_reciprocal_in_marmousi() {
    let n = 64;
    let field = SpeedField::from_grid(&marmousi_blend(0.4, n).unwrap()).unwrap();
    let tr = RayTracer::for_grid(&field, 1.0 / n as f64, 0.0).unwrap();
    let t_max = 3.0 * 2f64.sqrt() / field.c_min();
    for (x0, ang) in [((0.5, 0.6), -80.0), ((0.3, 0.7), -60.0), ((0.7, 0.4), 20.0), ((0.2, 0.2), 150.0)] {
        let a = f64::to_radians(ang);
        let ray = tr.trace_ray(x0, (a.cos(), a.sin()), t_max).unwrap();
        let drift = ray.states.iter().map(|s| (s.hamiltonian(&field) - 1.0).abs()).fold(0.0, f64::max);
        assert!(drift <= 1e-6, "drift {drift:e}");

        // trace back from the last interior point along the reversed slowness
        let inside = |p: (f64, f64)| (0.0..=1.0).contains(&p.0) && (0.0..=1.0).contains(&p.1);
        let last = ray.states.iter().rev().find(|s| inside(s.x)).unwrap();
        let back = tr.trace_ray(last.x, (-last.p.0, -last.p.1), last.t).unwrap();
        let end = back.states.last().unwrap().x;
        assert!((end.0 - x0.0).hypot(end.1 - x0.1) <= 2.0 / n as f64, "{end:?} vs {x0:?}");
    }
}

#[test]
fn masks_grow_with_receivers_and_change_with_medium() {
    let n = 32;
    let plan = CurveletPlan::new(n).unwrap();
    let flat = SpeedField::from_grid(&marmousi_blend(0.0, n).unwrap()).unwrap();
    let cfg = VisibilityConfig::new(&plan, &flat);
    let full = common::surface(n, &[0.1, 0.5, 0.9]);
    let mut half = full.clone();
    half.receivers.truncate(n / 2);
    let a = build_mask(&plan, &flat, &half, &cfg).unwrap();
    let b = build_mask(&plan, &flat, &full, &cfg).unwrap();
    assert!((0..plan.len()).all(|i| !a.get(i) || b.get(i)));
    assert!(a.count() < b.count());

    let marm = SpeedField::from_grid(&marmousi_blend(0.4, n).unwrap()).unwrap();
    let c = build_mask(&plan, &marm, &full, &VisibilityConfig::new(&plan, &marm)).unwrap();
    assert!(c.hamming(&b) > 0);
    for id in 0..plan.len() {
        assert_eq!(c.get(id), c.get(plan.atom(id).conj));
    }
}
