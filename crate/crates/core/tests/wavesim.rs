use probekit::grid::ModelGrid;
use probekit::wavesim::{record, ricker, solve_second_order, Acquisition, Medium, Movie, WaveSolver};

fn point_source(med: &Medium, node: (usize, usize), nt: usize) -> Movie {
    let (f0, t0, _) = Acquisition::default_time(med);
    let dt = med.max_dt();
    let n = med.n();
    let amp = (n * n) as f64;
    solve_second_order(med, nt, dt, |k, f| f[node.1 * n + node.0] = amp * ricker(k as f64 * dt, t0, f0)).unwrap()
}

/// Sum of `u_t^2 / c^2 + |grad u|^2` over the physical grid, per step.
fn interior_energy(movie: &Movie) -> Vec<f64> {
    let n = movie.n;
    let h = 1.0 / n as f64;
    (1..movie.nt)
        .map(|k| {
            let (u, up) = (movie.frame(k), movie.frame(k - 1));
            let mut e = 0.0;
            for iz in 1..n - 1 {
                for ix in 1..n - 1 {
                    let i = iz * n + ix;
                    let ut = (u[i] - up[i]) / movie.dt;
                    let gx = (u[i + 1] - u[i - 1]) / (2.0 * h);
                    let gz = (u[i + n] - u[i - n]) / (2.0 * h);
                    e += ut * ut + gx * gx + gz * gz;
                }
            }
            e * h * h
        })
        .collect()
}

#[test]
fn zero_forcing_gives_zero_movie() {
    let med = Medium::constant(32, 1.0).unwrap();
    let m = solve_second_order(&med, 50, med.max_dt(), |_, _| {}).unwrap();
    assert!((0..50).all(|k| m.frame(k).iter().all(|&v| v == 0.0)));
    let tr = record(&m, &[(3, 1), (9, 4)]).unwrap();
    assert!(tr.iter().flatten().all(|&v| v == 0.0));
    assert!(record(&m, &[(32, 1)]).is_err());
}

#[test]
fn unstable_step_is_rejected() {
    let med = Medium::constant(32, 1.0).unwrap();
    assert!(WaveSolver::new(&med, 1.5 * med.max_dt()).is_err());
}

#[test]
fn wavefront_radius_matches_travel_distance() {
    let n = 64;
    let med = Medium::constant(n, 1.0).unwrap();
    let (_, t0, _) = Acquisition::default_time(&med);
    let dt = med.max_dt();
    let travel = 0.3;
    let k = ((t0 + travel) / dt).round() as usize;
    let movie = point_source(&med, (32, 32), k + 1);
    let snap = movie.frame(k);
    let h = 1.0 / n as f64;
    // radial profile of |u| in bins of width h/2
    let bins = 2 * n;
    let mut sum = vec![0.0; bins];
    let mut cnt = vec![0usize; bins];
    for iz in 0..n {
        for ix in 0..n {
            let r = (((ix as f64 - 32.0).powi(2) + (iz as f64 - 32.0).powi(2)).sqrt()) * h;
            let b = (r / (0.5 * h)).round() as usize;
            if b < bins {
                sum[b] += snap[iz * n + ix].abs();
                cnt[b] += 1;
            }
        }
    }
    let (best, _) = (4..bins)
        .filter(|&b| cnt[b] > 0)
        .map(|b| (b, sum[b] / cnt[b] as f64))
        .fold((0, 0.0), |(bb, bv), (b, v)| if v > bv { (b, v) } else { (bb, bv) });
    let radius = best as f64 * 0.5 * h;
    let expected = k as f64 * dt - t0;
    assert!((radius - expected).abs() <= 2.0 * h, "ring at {radius}, expected {expected}");
}

#[test]
fn sponge_absorbs_outgoing_energy() {
    let n = 64;
    let med = Medium::constant(n, 1.0).unwrap();
    let (f0, t0, _) = Acquisition::default_time(&med);
    let dt = med.max_dt();
    let nt = ((t0 + 2.5) / dt) as usize;
    let movie = point_source(&med, (32, 32), nt);
    let e = interior_energy(&movie);
    let peak = e.iter().cloned().fold(0.0, f64::max);
    // the pulse has fully left the square once its tail passes the far corner
    let gone = ((t0 + 1.5 / f0 + 0.75) / dt) as usize;
    let late = e[gone..].iter().cloned().fold(0.0, f64::max);
    assert!(late <= 0.01 * peak, "late energy {late:e} vs peak {peak:e}");
    // once the front reaches the nearest boundary the energy only decays,
    // except for returning sponge reflections below the 1% floor
    let hit = ((t0 + 0.5 + 1.5 / f0) / dt) as usize;
    for k in hit + 1..e.len() {
        assert!(e[k] <= e[k - 1] || e[k] <= 0.01 * peak, "energy grew at step {k}");
    }
}

#[test]
fn symmetric_receivers_see_identical_traces() {
    let n = 48;
    let med = Medium::constant(n, 1.0).unwrap();
    let acq = Acquisition::surface(&med).unwrap();
    let movie = point_source(&med, (n / 2, 1), acq.nt);
    for d in [3usize, 10, 20] {
        let tr = record(&movie, &[(n / 2 - d, 1), (n / 2 + d, 1)]).unwrap();
        let scale = tr[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = tr[0].iter().zip(&tr[1]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff <= 1e-10 * scale, "offset {d}: {diff:e} vs {scale:e}");
    }
    let own = record(&movie, &[(n / 2, 1)]).unwrap();
    assert!(own[0].iter().any(|v| v.abs() > 0.0));
}

#[test]
fn reciprocity_in_constant_medium() {
    let n = 48;
    let med = Medium::constant(n, 1.0).unwrap();
    let nt = Acquisition::surface(&med).unwrap().nt;
    let (a, b) = ((7, 3), (30, 19));
    let ab = record(&point_source(&med, a, nt), &[b]).unwrap().remove(0);
    let ba = record(&point_source(&med, b, nt), &[a]).unwrap().remove(0);
    let num: f64 = ab.iter().zip(&ba).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = ab.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(num <= 1e-8 * den, "reciprocity gap {:e}", num / den);
}

#[test]
fn time_refinement_converges() {
    // fixed spatial grid; shrink dt and watch a trace settle
    let n = 32;
    let med = Medium::constant(n, 1.0).unwrap();
    let (f0, t0, _) = Acquisition::default_time(&med);
    let t_end = t0 + 0.5;
    let trace_at = |dt: f64| -> f64 {
        let nt = (t_end / dt).round() as usize + 1;
        let amp = (n * n) as f64;
        let m = solve_second_order(&med, nt, dt, |k, f| f[16 * n + 16] = amp * ricker(k as f64 * dt, t0, f0)).unwrap();
        m.frame(nt - 1)[16 * n + 24]
    };
    let dt0 = med.max_dt();
    // keep t_end on the time grid for all three step sizes
    let steps = (t_end / dt0).ceil();
    let dts = [t_end / steps, t_end / (2.0 * steps), t_end / (4.0 * steps)];
    let v: Vec<f64> = dts.iter().map(|&dt| trace_at(dt)).collect();
    let e1 = (v[0] - v[2]).abs();
    let e2 = (v[1] - v[2]).abs();
    assert!(e2 < e1, "{v:?}");
    let _ = ModelGrid::zeros(16);
}
