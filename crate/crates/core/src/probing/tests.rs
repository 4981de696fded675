use super::*;
use crate::pdo::BasisSpec;

fn full_mask(plan: &CurveletPlan) -> IlluminationMask {
    IlluminationMask::new(plan, true)
}

#[test]
fn trials_are_deterministic_and_masked() {
    let plan = CurveletPlan::new(32).unwrap();
    let mask = full_mask(&plan);
    let a = draw_trial(&plan, &mask, 1.0, 5).unwrap();
    let b = draw_trial(&plan, &mask, 1.0, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, draw_trial(&plan, &mask, 1.0, 6).unwrap());
    let none = IlluminationMask::new(&plan, false);
    assert_eq!(draw_trial(&plan, &none, 1.0, 5).unwrap().max_abs(), 0.0);
    let other = CurveletPlan::new(64).unwrap();
    assert!(draw_trial(&other, &mask, 1.0, 5).is_err());
}

#[test]
fn trial_energy_matches_atom_norms() {
    let plan = CurveletPlan::new(32).unwrap();
    let mask = full_mask(&plan);
    let sigma = 0.7;
    let expected: f64 = (0..plan.len()).map(|id| sigma * sigma * plan.atom(id).norm.powi(4)).sum();
    let draws = 200;
    let mean: f64 = (0..draws).map(|s| draw_trial(&plan, &mask, sigma, s).unwrap().norm_sq()).sum::<f64>() / draws as f64;
    assert!((mean / expected - 1.0).abs() < 0.1, "{mean} vs {expected}");
}

#[test]
fn trial_kinds_parse() {
    for k in TrialKind::ALL {
        assert_eq!(k.name().parse::<TrialKind>().unwrap(), k);
    }
    assert!("noise".parse::<TrialKind>().is_err());
}

fn identity(n: usize) -> DenseOperator {
    DenseOperator::new(n, DMatrix::identity(n * n, n * n)).unwrap()
}

/// Pairs `(y, x)` with `x` white and `y = sum c_i B_i x`.
fn synthetic_pairs(basis: &PdoBasis, coeffs: &[Complex64], count: usize, seed: u64) -> Vec<ProbePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|t| {
            let x = white(basis.n(), 1.0, &mut rng);
            ProbePair { y: basis.apply_fitted(coeffs, &x).unwrap(), x, seed: t as u64, kind: None }
        })
        .collect()
}

#[test]
fn one_parameter_projection() {
    let n = 16;
    let basis = PdoBasis::new(BasisSpec::new(0, 0, 0, 0, n).unwrap(), n).unwrap();
    let pairs = synthetic_pairs(&basis, &[Complex64::new(2.0, 0.0)], 1, 3);
    let rep = fit(&pairs, &basis, FitOptions { tikhonov: 0.0 }).unwrap();
    assert!((rep.operator.coeffs[0] - Complex64::new(2.0, 0.0)).norm() < 1e-12);
    assert!(rep.residual < 1e-12);
    assert!((rep.m_cond - 1.0).abs() < 1e-12);
}

#[test]
fn recovers_synthetic_expansion() {
    let n = 32;
    let basis = PdoBasis::new(BasisSpec::new(1, 1, 1, 0, n).unwrap(), n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params: Vec<f64> = (0..basis.real_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let truth = basis.coeffs_from_real(&params).unwrap();
    let pairs = synthetic_pairs(&basis, &truth, 2, 1);
    let rep = fit(&pairs, &basis, FitOptions::default()).unwrap();
    let err: f64 = rep.params.iter().zip(&params).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = params.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(err / norm < 1e-6, "{}", err / norm);
    assert!(rep.residual < 1e-6);
    assert!(rep.residual >= 0.0 && rep.residual <= 1.0 && rep.m_cond >= 1.0);
}

#[test]
fn single_trial_matches_closed_form() {
    let n = 16;
    let basis = PdoBasis::new(BasisSpec::new(1, 1, 0, 0, n).unwrap(), n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = white(n, 1.0, &mut rng);
    let y = white(n, 1.0, &mut rng);
    let pair = ProbePair { y: y.clone(), x: x.clone(), seed: 0, kind: None };
    let rep = fit(&[pair], &basis, FitOptions { tikhonov: 0.0 }).unwrap();
    // c = M^{-1} (B x)^T y built directly from the columns
    let cols = basis.real_columns(&x).unwrap();
    let p = cols.len();
    let m: DMatrix<f64> = DMatrix::from_fn(p, p, |i, j| cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum());
    let b: DVector<f64> = DVector::from_fn(p, |i, _| cols[i].iter().zip(y.data()).map(|(a, b)| a * b).sum());
    let c = m.try_inverse().unwrap() * b;
    for (a, e) in rep.params.iter().zip(c.iter()) {
        assert!((a - e).abs() < 1e-10 * (1.0 + e.abs()));
    }
}

#[test]
fn fit_is_scale_invariant() {
    let n = 16;
    let basis = PdoBasis::new(BasisSpec::new(1, 1, 1, 0, n).unwrap(), n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pairs: Vec<ProbePair> = (0..2)
        .map(|t| ProbePair { y: white(n, 1.0, &mut rng), x: white(n, 1.0, &mut rng), seed: t, kind: None })
        .collect();
    let scaled: Vec<ProbePair> = pairs
        .iter()
        .map(|q| ProbePair { y: q.y.scaled(37.0), x: q.x.scaled(37.0), ..q.clone() })
        .collect();
    let a = fit(&pairs, &basis, FitOptions::default()).unwrap();
    let b = fit(&scaled, &basis, FitOptions::default()).unwrap();
    for (u, v) in a.params.iter().zip(&b.params) {
        assert!((u - v).abs() < 1e-12 * (1.0 + u.abs()), "{u} {v}");
    }
}

#[test]
fn fit_rejects_underdetermined() {
    let n = 16;
    let basis = PdoBasis::new(BasisSpec::new(3, 2, 1, 0, n).unwrap(), n).unwrap();
    assert!(basis.real_dim() > n * n);
    let pairs = synthetic_pairs(&basis, &vec![Complex64::default(); basis.p()], 1, 0);
    assert!(fit(&pairs, &basis, FitOptions::default()).is_err());
    assert!(fit(&[], &basis, FitOptions::default()).is_err());
}

#[test]
fn identity_diagnostics() {
    let n = 16;
    let h = identity(n);
    // pure modulations are isometric and trace-orthogonal
    let basis = PdoBasis::new(BasisSpec::new(1, 0, 0, 0, n).unwrap(), n).unwrap();
    let d = dense_diagnostics(h.matrix(), &basis, 1e-3).unwrap();
    let scale = (n * n) as f64;
    assert!((d.expected_m.clone() / scale - DMatrix::identity(basis.p(), basis.p())).norm() < 1e-10);
    assert!((d.kappa - 1.0).abs() < 1e-10);
    assert_eq!(d.rank, Some(n * n));
    let id_basis = PdoBasis::new(BasisSpec::new(0, 0, 0, 0, n).unwrap(), n).unwrap();
    let d = dense_diagnostics(h.matrix(), &id_basis, 1e-3).unwrap();
    assert!((d.eta.unwrap() - 1.0).abs() < 1e-12);

    let s = sampled_diagnostics(&h, &basis, 3, 1).unwrap();
    assert!(s.kappa.is_finite() && s.eta.is_none());
}

#[test]
fn report_text() {
    let n = 16;
    let basis = PdoBasis::new(BasisSpec::new(0, 0, 0, 0, n).unwrap(), n).unwrap();
    let pairs = synthetic_pairs(&basis, &[Complex64::new(2.0, 0.0)], 1, 3);
    let rep = fit(&pairs, &basis, FitOptions::default()).unwrap();
    let text = rep.to_text();
    assert!(text.contains("p: 1\n") && text.contains("kappa_est: none\n"));
    let dir = tempfile::tempdir().unwrap();
    rep.write(dir.path(), "r1").unwrap();
    let back = FittedOperator::read(dir.path().join("r1.pksym")).unwrap();
    assert_eq!(back.coeffs, rep.operator.coeffs);
}

#[test]
fn eps_rank_is_strict() {
    let s = [4.0, 2.0, 0.4, 0.0];
    assert_eq!(eps_rank(&s, 1.0), 0);
    assert_eq!(eps_rank(&s, 0.5), 1);
    assert_eq!(eps_rank(&s, 0.1), 2);
    assert_eq!(eps_rank(&s, 0.0), 3);
}
