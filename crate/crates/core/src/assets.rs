//! Bundled models.
//!
//! The Marmousi-like pair is synthesized by [`generate_marmousi`] (folded,
//! faulted layers over a slow top layer) and stored at n = 128 as PKGRID1
//! files; `cargo run --example make_assets` rewrites them. Other sizes are
//! bilinear resamples of the bundled grids.

use crate::error::{Error, Result};
use crate::grid::{freq_index, read_grid_bytes, Fft2, ModelGrid};
use rustfft::num_complex::Complex64;

const BACKGROUND_128: &[u8] = include_bytes!("../assets/marmousi_smooth_128.pkgrid");
const REFLECTIVITY_128: &[u8] = include_bytes!("../assets/marmousi_reflectivity_128.pkgrid");

/// Native size of the bundled grids.
pub const ASSET_N: usize = 128;

/// Smooth speed background `M`, resampled to `n`.
pub fn marmousi_background(n: usize) -> Result<ModelGrid> {
    let g = read_grid_bytes(BACKGROUND_128)?;
    Ok(if n == g.n() { g } else { g.resample(n) })
}

/// Band-passed reflectivity with unit peak, resampled to `n`.
pub fn marmousi_reflectivity(n: usize) -> Result<ModelGrid> {
    let g = read_grid_bytes(REFLECTIVITY_128)?;
    Ok(if n == g.n() { g } else { g.resample(n) })
}

/// Low-pass of `g` keeping Fourier bins with `|k| <= radius` (bins of the
/// `n`-grid). The grid is mirrored to `2n x 2n` first so the filter sees no
/// wrap-around jump between opposite edges.
pub fn disk_filter(g: &ModelGrid, radius: f64) -> ModelGrid {
    let n = g.n();
    let m = 2 * n;
    let fft = Fft2::square(m);
    let fold = |i: usize| if i < n { i } else { m - 1 - i };
    let mut v: Vec<Complex64> =
        (0..m * m).map(|b| Complex64::new(g.get(fold(b % m), fold(b / m)), 0.0)).collect();
    fft.forward(&mut v);
    for (b, c) in v.iter_mut().enumerate() {
        if (freq_index(b % m, m) as f64).hypot(freq_index(b / m, m) as f64) > 2.0 * radius {
            *c = Complex64::default();
        }
    }
    fft.inverse(&mut v);
    let data = (0..n * n).map(|b| v[(b / n) * m + b % n].re).collect();
    ModelGrid::new(n, data).expect("filter keeps the grid valid")
}

/// Convex blend between the mean of `M` and `M` low-passed to a disk of
/// radius `gamma n`: constant at `gamma = 0`, pure low-pass at `gamma = 0.4`.
pub fn marmousi_blend(gamma: f64, n: usize) -> Result<ModelGrid> {
    if !(0.0..=0.4).contains(&gamma) {
        return Err(Error::invalid(format!("blend parameter {gamma} outside [0, 0.4]")));
    }
    let m = marmousi_background(n)?;
    let w = gamma / 0.4;
    let mean = m.mean();
    if w == 0.0 {
        return Ok(ModelGrid::constant(n, mean));
    }
    let low = disk_filter(&m, gamma * n as f64);
    if w == 1.0 {
        return Ok(low);
    }
    ModelGrid::new(n, low.data().iter().map(|&v| (1.0 - w) * mean + w * v).collect())
}

/// Three flat reflectors with alternating polarity, smoothed over two cells.
pub fn layered_reflectivity(n: usize) -> ModelGrid {
    let h = 1.0 / n as f64;
    let w = 2.0 * h;
    let layers = [(0.35, 1.0), (0.55, -0.7), (0.75, 0.8)];
    ModelGrid::from_fn(n, |_, z| {
        layers.iter().map(|&(z0, a)| a * (-((z - z0) / w).powi(2)).exp()).sum()
    })
}

const LAYER_JITTER: [f64; 13] = [0.0, 0.06, -0.04, 0.08, -0.07, 0.05, 0.09, -0.03, 0.07, -0.08, 0.04, 0.02, -0.05];

fn sharp_speed(x: f64, z: f64) -> f64 {
    let smoothstep = |a: f64, b: f64, t: f64| {
        let s = ((t - a) / (b - a)).clamp(0.0, 1.0);
        s * s * (3.0 - 2.0 * s)
    };
    let mut zeta = z - 0.05 * z * (2.0 * std::f64::consts::PI * (1.2 * x + 0.3)).sin();
    zeta += 0.09 * (-((x - 0.62) / 0.14).powi(2)).exp() * smoothstep(0.3, 0.6, z);
    if z > 0.25 && x > 0.3 + 0.25 * z {
        zeta += 0.05;
    }
    if zeta < 0.08 {
        return 1.0;
    }
    let i = (((zeta - 0.08) / 0.07).floor() as usize).min(LAYER_JITTER.len() - 1);
    1.1 + 1.0 * (i as f64 / 12.0).powf(0.8) + LAYER_JITTER[i]
}

/// Separable Gaussian blur with edge replication; `sigma` in unit lengths.
pub fn gaussian_blur(g: &ModelGrid, sigma: f64) -> ModelGrid {
    let n = g.n();
    let s = sigma * n as f64;
    let r = (4.0 * s).ceil() as i64;
    let w: Vec<f64> = (-r..=r).map(|d| (-(d as f64 / s).powi(2) / 2.0).exp()).collect();
    let total: f64 = w.iter().sum();
    let clamp = |i: i64| i.clamp(0, n as i64 - 1) as usize;
    let pass = |src: &[f64], along_x: bool| -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for iz in 0..n {
            for ix in 0..n {
                let mut acc = 0.0;
                for (k, &wk) in w.iter().enumerate() {
                    let d = k as i64 - r;
                    acc += wk * if along_x {
                        src[iz * n + clamp(ix as i64 + d)]
                    } else {
                        src[clamp(iz as i64 + d) * n + ix]
                    };
                }
                out[iz * n + ix] = acc / total;
            }
        }
        out
    };
    let a = pass(g.data(), true);
    let b = pass(&a, false);
    ModelGrid::new(n, b).expect("blur keeps the grid valid")
}

/// `(smooth background, reflectivity)` at size `n`, computed from scratch.
pub fn generate_marmousi(n: usize) -> (ModelGrid, ModelGrid) {
    // supersample the piecewise-constant model before blurring
    let fine = 4;
    let hi = ModelGrid::from_fn(n * fine, sharp_speed);
    let down = |g: &ModelGrid| {
        ModelGrid::from_fn(n, |x, z| {
            let (ix, iz) = ((x * (n * fine) as f64).round() as usize, (z * (n * fine) as f64).round() as usize);
            g.get(ix, iz)
        })
    };
    let background = down(&gaussian_blur(&hi, 0.035));
    let mut refl = down(&gaussian_blur(&hi, 0.004)).sub(&down(&gaussian_blur(&hi, 0.015)));
    let peak = refl.max_abs();
    refl.scale(1.0 / peak);
    (background, refl)
}
