#![allow(dead_code)]

use std::f64::consts::PI;

use probekit::grid::{freq_index, Fft2};
use probekit::illumination::{Geometry, VisibilityConfig};
use probekit::ModelGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

pub fn white(n: usize, seed: u64) -> ModelGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelGrid::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Real random field with spectrum restricted to `lo <= |k| < hi` (radians).
pub fn annulus(n: usize, lo: f64, hi: f64, seed: u64) -> ModelGrid {
    let fft = Fft2::square(n);
    let mut v: Vec<Complex64> = white(n, seed).data().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft.forward(&mut v);
    for (b, c) in v.iter_mut().enumerate() {
        let k = 2.0 * PI * (freq_index(b % n, n) as f64).hypot(freq_index(b / n, n) as f64);
        if k < lo || k >= hi {
            *c = Complex64::default();
        }
    }
    fft.inverse(&mut v);
    ModelGrid::new(n, v.iter().map(|c| c.re).collect()).unwrap()
}

/// `(1 + sin(2 pi x) / 2) |k|`, optionally times `e^{i theta}`.
pub fn test_symbol(angular: bool) -> impl Fn((f64, f64), (f64, f64)) -> Complex64 + Sync {
    move |x, k| {
        let r = (1.0 + 0.5 * (2.0 * PI * x.0).sin()) * k.0.hypot(k.1);
        if angular {
            Complex64::from_polar(r, k.1.atan2(k.0))
        } else {
            Complex64::new(r, 0.0)
        }
    }
}

pub fn surface(n: usize, sources: &[f64]) -> Geometry {
    let h = 1.0 / n as f64;
    Geometry {
        sources: sources.iter().map(|&x| ((x * n as f64).round() * h, h)).collect(),
        receivers: (0..n).map(|i| (i as f64 * h, h)).collect(),
    }
}

/// Straight-ray mirror test in a homogeneous medium of speed `c`.
pub fn oracle(x: (f64, f64), k: (f64, f64), g: &Geometry, cfg: &VisibilityConfig, c: f64) -> bool {
    let nk = k.0.hypot(k.1);
    if nk == 0.0 {
        return true;
    }
    let (lo, hi) = (-cfg.margin(), 1.0 + cfg.margin());
    let reach = |d: (f64, f64)| {
        let exit = |p: f64, v: f64| {
            if v > 0.0 {
                (hi - p) / v
            } else if v < 0.0 {
                (lo - p) / v
            } else {
                f64::INFINITY
            }
        };
        let len = exit(x.0, d.0).min(exit(x.1, d.1)).min(c * cfg.t_max);
        let end = (x.0 + len * d.0, x.1 + len * d.1);
        let dist2 = |p: (f64, f64)| {
            let t = ((p.0 - x.0) * d.0 + (p.1 - x.1) * d.1).clamp(0.0, len);
            (x.0 + t * d.0 - p.0).powi(2) + (x.1 + t * d.1 - p.1).powi(2)
        };
        let _ = end;
        (
            g.sources.iter().any(|&p| dist2(p) <= cfg.tol_src * cfg.tol_src),
            g.receivers.iter().any(|&p| dist2(p) <= cfg.tol_rcv * cfg.tol_rcv),
        )
    };
    for sign in [1.0, -1.0] {
        let o = (sign * k.0 / nk, sign * k.1 / nk);
        for j in 0..cfg.sweep {
            let a = (j as f64 + 0.5) * 0.5 * PI / cfg.sweep as f64;
            let rot = |t: f64| (o.0 * t.cos() - o.1 * t.sin(), o.0 * t.sin() + o.1 * t.cos());
            let (s1, r1) = reach(rot(a));
            let (s2, r2) = reach(rot(-a));
            if (s1 && r2) || (r1 && s2) {
                return true;
            }
        }
    }
    false
}
