//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! `PROBEKIT_ACCEPTANCE=1,5,8` runs a subset. Failures are reported, and the
//! process exits nonzero on any failure only when `PROBEKIT_ACCEPTANCE_STRICT`
//! is set.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::time::Instant;

use probekit::born::LinearizedProblem;
use probekit::curvelet::CurveletPlan;
use probekit::harness::{eps_rank_table, run_experiment, ExperimentConfig, EPS_LIST};
use probekit::illumination::{build_mask, RayTracer, SpeedField, VisibilityConfig};
use probekit::pdo::{BasisSpec, PdoBasis, SymbolIndex};
use probekit::probing::{fit, FitOptions, ProbePair, TrialKind};
use probekit::theory::{run_suite, SuiteOptions};
use probekit::wavesim::{Acquisition, Medium};
use probekit::{mse, ModelGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);

fn problem(n: usize) -> LinearizedProblem {
    let med = Medium::constant(n, 1.0).unwrap();
    let acq = Acquisition::surface(&med).unwrap();
    LinearizedProblem::new(med, acq).unwrap()
}

fn adjoint() -> Outcome {
    let t = Instant::now();
    let prob = problem(48);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let dm = ModelGrid::from_fn(48, |_, _| rng.gen_range(-1.0..1.0));
        let mut d = prob.empty_data();
        d.values_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let fd = prob.born_forward(&dm).unwrap();
        let ad = prob.migrate(&d).unwrap();
        worst = worst.max((fd.dot(&d) - dm.dot(&ad)).abs() / (fd.norm() * d.norm()));
    }
    let secs = t.elapsed().as_secs_f64();
    (worst <= 1e-10 && secs < 120.0, format!("max relative gap {worst:.2e}, {secs:.1} s"))
}

fn hessian() -> Outcome {
    let prob = problem(48);
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let vs: Vec<ModelGrid> = (0..20).map(|_| ModelGrid::from_fn(48, |_, _| rng.gen_range(-1.0..1.0))).collect();
    let hv: Vec<ModelGrid> = vs.iter().map(|v| prob.hessian_apply(v).unwrap()).collect();
    let (mut asym, mut neg) = (0.0f64, 0.0f64);
    for i in 0..vs.len() {
        let j = (i + 1) % vs.len();
        let (a, b) = (hv[i].dot(&vs[j]), vs[i].dot(&hv[j]));
        asym = asym.max((a - b).abs() / a.abs().max(b.abs()));
        neg = neg.max(-hv[i].dot(&vs[i]) / (hv[i].norm() * vs[i].norm()));
    }
    let small = problem(16);
    let h = small.dense_hessian(false).unwrap();
    let mut col_gap = 0.0f64;
    for j in 0..256 {
        let mut e = ModelGrid::zeros(16);
        e.data_mut()[j] = 1.0;
        let col = small.hessian_apply(&e).unwrap();
        let gap = col.data().iter().zip(h.column(j).iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        col_gap = col_gap.max(gap / col.max_abs());
    }
    (
        asym <= 1e-9 && neg <= 1e-12 && col_gap <= 1e-12,
        format!("asymmetry {asym:.2e}, worst negative form {neg:.2e}, dense column gap {col_gap:.2e}"),
    )
}

fn frame() -> Outcome {
    let t = Instant::now();
    let mut worst = (0.0f64, 0.0f64);
    for n in [64, 128] {
        let plan = CurveletPlan::new(n).unwrap();
        for s in 0..10 {
            let f = common::white(n, 300 + s);
            let c = plan.analyze(&f).unwrap();
            worst.0 = worst.0.max((c.energy() - f.norm_sq()).abs() / f.norm_sq());
            worst.1 = worst.1.max(mse(&f, &plan.synthesize(&c).unwrap()).unwrap());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    (
        worst.0 <= 1e-10 && worst.1 <= 1e-10 && secs < 60.0,
        format!("energy gap {:.2e}, reconstruction mse {:.2e}, {secs:.1} s", worst.0, worst.1),
    )
}

fn basis() -> Outcome {
    let n = 32;
    let b = PdoBasis::new(BasisSpec::new(0, 0, 0, 1, n).unwrap(), n).unwrap();
    let mut eig = 0.0f64;
    for m in [1usize, 3, 7] {
        let f = ModelGrid::from_fn(n, |x, _| (2.0 * PI * m as f64 * x).cos());
        let out = b.apply_elementary(&SymbolIndex::new(0, 0, 0, 0), &f).unwrap();
        let w = 2.0 * PI * m as f64;
        for (o, v) in out.iter().zip(f.data()) {
            eig = eig.max((o - w * v).norm() / w);
        }
    }
    let b = PdoBasis::new(BasisSpec::new(2, 1, 1, 0, n).unwrap(), n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let params: Vec<f64> = (0..b.real_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c = b.coeffs_from_real(&params).unwrap();
    let (f, g) = (common::white(n, 105), common::white(n, 106));
    let (a, s) = (1.7, -0.6);
    let combo = ModelGrid::new(n, f.data().iter().zip(g.data()).map(|(u, v)| a * u + s * v).collect()).unwrap();
    let lhs = b.apply_fitted(&c, &combo).unwrap();
    let (pf, pg) = (b.apply_fitted(&c, &f).unwrap(), b.apply_fitted(&c, &g).unwrap());
    let lin = lhs
        .data()
        .iter()
        .zip(pf.data().iter().zip(pg.data()))
        .fold(0.0f64, |m, (l, (u, v))| m.max((l - a * u - s * v).abs()))
        / lhs.max_abs();
    (eig <= 1e-10 && lin <= 1e-12, format!("plane-wave eigenvalue gap {eig:.2e}, linearity gap {lin:.2e}"))
}

fn synthetic() -> Outcome {
    let t = Instant::now();
    let n = 64;
    let basis = PdoBasis::new(BasisSpec::new(2, 0, 1, 0, n).unwrap(), n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let params: Vec<f64> = (0..basis.real_dim()).map(|_| rng.gen_range(0.5..1.5)).collect();
    let truth = basis.coeffs_from_real(&params).unwrap();
    let pairs: Vec<ProbePair> = (0..2)
        .map(|t| {
            let x = common::white(n, 100 + t);
            ProbePair { y: basis.apply_fitted(&truth, &x).unwrap(), x, seed: 100 + t, kind: Some(TrialKind::WhiteModel) }
        })
        .collect();
    let rep = fit(&pairs, &basis, FitOptions::default()).unwrap();
    let num: f64 = rep.operator.coeffs.iter().zip(&truth).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = truth.iter().map(|b| b.norm_sqr()).sum();
    let coef = (num / den).sqrt();
    let fresh = common::white(n, 999);
    let action = mse(&basis.apply_fitted(&truth, &fresh).unwrap(), &rep.apply(&basis, &fresh).unwrap()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    (
        basis.p() == 50 && coef <= 1e-6 && action <= 1e-5 && secs < 300.0,
        format!("p = {}, coefficient error {coef:.2e}, fresh action mse {action:.2e}, {secs:.1} s", basis.p()),
    )
}

/// One n = 64 constant-medium run shared by the image and generalization checks.
fn experiment(dir: &Path) -> probekit::harness::ExperimentReport {
    let mut cfg = ExperimentConfig::default();
    cfg.output = dir.join("n64");
    if cfg.cache.is_none() && std::env::var_os("PROBEKIT_CACHE").is_none() {
        cfg.cache = Some(dir.join("cache"));
    }
    cfg.generalization.seeds = vec![1, 2, 3];
    cfg.probing.preconditioners = ["R1", "R4", "R7", "K1", "K4"].map(String::from).to_vec();
    cfg.generalization.preconditioners = cfg.probing.preconditioners.clone();
    run_experiment(&cfg).unwrap()
}

fn preconditioner_works(r: &probekit::harness::ExperimentReport, secs: f64) -> Outcome {
    let trunc = "4-2-1";
    let mut ok = secs < 1800.0;
    let mut parts = Vec::new();
    for label in ["R4", "K1"] {
        let row = r.row(label, trunc).unwrap();
        ok &= row.p >= 700 && row.p <= 900 && row.mse_masked_reference < 1.0;
        let band = if (0.25..=0.7).contains(&row.mse_masked_reference) { "in" } else { "outside" };
        parts.push(format!("{label} p={} mse {:.3} ({band} 0.25-0.7 band)", row.p, row.mse_masked_reference));
    }
    (ok, format!("{}, {secs:.0} s", parts.join(", ")))
}

fn generalization(r: &probekit::harness::ExperimentReport) -> Outcome {
    let trunc = "4-2-1";
    let mut votes = 0;
    let mut parts = Vec::new();
    for seed in [1u64, 2, 3] {
        let e = |l: &str| r.generalization_error(seed, l, trunc).unwrap();
        let rs = [e("R1"), e("R4"), e("R7")];
        let max = rs.iter().cloned().fold(f64::MIN, f64::max);
        let min = rs.iter().cloned().fold(f64::MAX, f64::min);
        let pass = e("K4") > e("K1") && max <= 1.1 * min;
        votes += pass as usize;
        parts.push(format!("seed {seed}: K1 {:.3} K4 {:.3} R {:.3}..{:.3}", e("K1"), e("K4"), min, max));
    }
    (votes >= 2, format!("{votes}/3 seeds; {}", parts.join("; ")))
}

fn theory() -> Outcome {
    let t = Instant::now();
    let r = run_suite(&SuiteOptions::default()).unwrap();
    let (viol, checked) = r.explicit_violations();
    let margins = r.margin_failures();
    let secs = t.elapsed().as_secs_f64();
    let medians: Vec<String> = r.sweep.iter().map(|row| format!("{:.4}", row.median())).collect();
    (
        r.tails_hold() && r.sweep_strictly_decreasing() && viol == 0 && checked > 0 && margins == 0 && secs < 600.0,
        format!(
            "tail bound {}, medians [{}], explicit violations {viol} over {checked} rows, margin failures {margins}, {secs:.0} s",
            if r.tails_hold() { "holds" } else { "violated" },
            medians.join(", ")
        ),
    )
}

fn illumination() -> Outcome {
    let n = 64;
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
    let frac = agree as f64 / plan.len() as f64;

    let (a, b) = (1.0, 2.0);
    let f = SpeedField::linear_z(a, b).unwrap();
    let tr = RayTracer::new(&f, 1e-3, -1.0, 2.0).unwrap();
    let th = 30f64.to_radians();
    let x0 = (0.2, 0.0);
    let ray = tr.trace_ray(x0, (th.sin(), th.cos()), 1.0).unwrap();
    let r = a / (b * th.sin());
    let center = (x0.0 + r * th.cos(), -a / b);
    let arc = ray.states.iter().fold(0.0f64, |m, s| m.max(((s.x.0 - center.0).hypot(s.x.1 - center.1) - r).abs()));
    (frac >= 0.99 && arc <= 1e-6, format!("oracle agreement {:.2}%, arc radius gap {arc:.2e}", 100.0 * frac))
}

fn eps_rank() -> Outcome {
    let t = Instant::now();
    let table = eps_rank_table(&problem(48), &EPS_LIST, true).unwrap();
    let strict = table.windows(2).all(|w| w[1].1 > w[0].1);
    let top = table[0].1 as f64 / (48.0 * 48.0);
    let ranks: Vec<String> = table.iter().map(|(e, r)| format!("{e:e}:{r}")).collect();
    (
        strict && top < 0.2,
        format!("ranks [{}], rank(1e-1)/n^2 = {top:.3}, {:.0} s", ranks.join(" "), t.elapsed().as_secs_f64()),
    )
}

fn csvs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn determinism(dir: &Path) -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.n = 32;
    cfg.output = dir.join("n32");
    cfg.cache = Some(dir.join("cache32"));
    cfg.reference.steps = 20;
    cfg.basis.truncations = vec![[1, 1, 0], [2, 1, 1]];
    cfg.probing.preconditioners = ["R1", "R2", "K2"].map(String::from).to_vec();
    cfg.generalization.seeds = vec![4];
    cfg.generalization.preconditioners = cfg.probing.preconditioners.clone();
    run_experiment(&cfg).unwrap();
    let first = csvs(&cfg.output);
    // a second run without the wavefield cache must not change anything
    cfg.cache = None;
    run_experiment(&cfg).unwrap();
    let second = csvs(&cfg.output);
    let same = first.len() >= 3 && first == second;
    (same, format!("{} CSV files compared byte for byte", first.len()))
}

fn main() {
    let selected: Option<Vec<usize>> = std::env::var("PROBEKIT_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let want = |i: usize| selected.as_ref().map_or(true, |s| s.contains(&i));
    let tmp = tempfile::tempdir().unwrap();

    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut run = |i: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        if want(i) {
            let out = f();
            println!("criterion {i:2} {}: {name}: {}", if out.0 { "PASS" } else { "FAIL" }, out.1);
            results.push((i, name, out));
        }
    };
    run(1, "adjoint correctness", &mut adjoint);
    run(2, "hessian structure", &mut hessian);
    run(3, "frame", &mut frame);
    run(4, "basis", &mut basis);
    run(5, "synthetic exact recovery", &mut synthetic);
    if want(6) || want(7) {
        let t = Instant::now();
        let report = experiment(tmp.path());
        let secs = t.elapsed().as_secs_f64();
        run(6, "preconditioner works", &mut || preconditioner_works(&report, secs));
        run(7, "generalization ordering", &mut || generalization(&report));
    }
    run(8, "theory suite", &mut theory);
    run(9, "illumination", &mut illumination);
    run(10, "eps-rank shape", &mut eps_rank);
    run(11, "determinism", &mut || determinism(tmp.path()));

    let failed: Vec<usize> = results.iter().filter(|r| !r.2 .0).map(|r| r.0).collect();
    println!("acceptance: {} of {} passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() && std::env::var_os("PROBEKIT_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
