//! Constant-density acoustic solver: spectral Laplacian in space, leapfrog in
//! time, quadratic friction sponge around the physical square.

mod laplacian;
mod shot;
mod solver;

pub use laplacian::{LaplacianScratch, SpectralLaplacian};
pub use shot::{read_shot, read_shot_bytes, write_shot, write_shot_bytes, ShotData};
pub use solver::{record, solve_second_order, Movie, WaveSolver};

use crate::error::{Error, Result};
use crate::grid::ModelGrid;

/// Ricker wavelet with unit peak at `t = t0`.
pub fn ricker(t: f64, t0: f64, f0: f64) -> f64 {
    let a = (std::f64::consts::PI * f0 * (t - t0)).powi(2);
    (1.0 - 2.0 * a) * (-a).exp()
}

/// Background squared slowness plus the padded coefficient layout.
#[derive(Clone, Debug)]
pub struct Medium {
    m0: ModelGrid,
    c_min: f64,
    c_max: f64,
}

impl Medium {
    pub fn new(m0: ModelGrid) -> Result<Self> {
        if m0.n() % 2 != 0 {
            return Err(Error::invalid(format!("wave solver needs even n, got {}", m0.n())));
        }
        if let Some(v) = m0.data().iter().find(|&&v| v <= 0.0) {
            return Err(Error::invalid(format!("squared slowness must be positive, found {v}")));
        }
        let c_min = 1.0 / m0.max().sqrt();
        let c_max = 1.0 / m0.min().sqrt();
        Ok(Medium { m0, c_min, c_max })
    }

    /// Uniform medium with wave speed `c`.
    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(ModelGrid::constant(n, 1.0 / (c * c)))
    }

    pub fn m0(&self) -> &ModelGrid {
        &self.m0
    }

    pub fn n(&self) -> usize {
        self.m0.n()
    }

    pub fn h(&self) -> f64 {
        self.m0.h()
    }

    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    /// Sponge width in nodes per side.
    pub fn pml_width(&self) -> usize {
        (0.15 * self.n() as f64).ceil() as usize
    }

    pub fn padded_n(&self) -> usize {
        self.n() + 2 * self.pml_width()
    }

    /// Squared wave speed on the padded grid, edge-clamped into the sponge.
    pub fn padded_speed_sq(&self) -> Vec<f64> {
        let (n, w, np) = (self.n(), self.pml_width(), self.padded_n());
        let mut out = vec![0.0; np * np];
        for pz in 0..np {
            let iz = pz.saturating_sub(w).min(n - 1);
            for px in 0..np {
                let ix = px.saturating_sub(w).min(n - 1);
                out[pz * np + px] = 1.0 / self.m0.get(ix, iz);
            }
        }
        out
    }

    /// Damping rate on the padded grid: `sigma_max (d / w)^2` per axis,
    /// with `d` the node distance past the physical square measured from the
    /// padded center, and `sigma_max = 8 c_max / (w h)`.
    pub fn padded_damping(&self) -> Vec<f64> {
        let (n, w, np) = (self.n() as f64, self.pml_width(), self.padded_n());
        let sigma_max = 8.0 * self.c_max / (w as f64 * self.h());
        let center = (np / 2) as f64;
        let prof: Vec<f64> = (0..np)
            .map(|p| {
                let d = ((p as f64 - center).abs() - n / 2.0).max(0.0);
                sigma_max * (d / w as f64).powi(2)
            })
            .collect();
        let mut out = vec![0.0; np * np];
        for pz in 0..np {
            for px in 0..np {
                out[pz * np + px] = prof[px] + prof[pz];
            }
        }
        out
    }

    /// Largest stable time step for this medium.
    pub fn max_dt(&self) -> f64 {
        0.5 * self.h() / (std::f64::consts::PI * self.c_max)
    }

    /// Content hash of the background, used for cache keys.
    pub fn hash_hex(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(crate::grid::write_grid_bytes(&self.m0));
        hex(&hasher.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Grid node `(ix, iz)` on the physical grid.
pub type Node = (usize, usize);

/// Sources, receivers and time axis of a survey.
#[derive(Clone, Debug, PartialEq)]
pub struct Acquisition {
    pub sources: Vec<Node>,
    pub receivers: Vec<Node>,
    pub dt: f64,
    pub nt: usize,
    pub f0: f64,
    pub t0: f64,
    wavelet: Vec<f64>,
}

impl Acquisition {
    /// Surface survey: sources at x in {0.1, 0.5, 0.9} and receivers on every
    /// node, all on the row z = h. Time axis from [`Acquisition::default_time`].
    pub fn surface(medium: &Medium) -> Result<Self> {
        let n = medium.n();
        let sources = [0.1, 0.5, 0.9].iter().map(|&x| (snap(x, n), 1)).collect();
        let receivers = (0..n).map(|ix| (ix, 1)).collect();
        Self::new(medium, sources, receivers)
    }

    /// Survey with explicit nodes and the default wavelet and duration.
    pub fn new(medium: &Medium, sources: Vec<Node>, receivers: Vec<Node>) -> Result<Self> {
        let (f0, t0, duration) = Self::default_time(medium);
        Self::with_time(medium, sources, receivers, f0, t0, duration)
    }

    /// Peak frequency `c_min / (10 h)`, delay `1.5 / f0`, and a record
    /// long enough for a two-way trip through the full depth.
    pub fn default_time(medium: &Medium) -> (f64, f64, f64) {
        let f0 = medium.c_min() / (10.0 * medium.h());
        let t0 = 1.5 / f0;
        (f0, t0, t0 + 2.0 / medium.c_min())
    }

    pub fn with_time(
        medium: &Medium,
        sources: Vec<Node>,
        receivers: Vec<Node>,
        f0: f64,
        t0: f64,
        duration: f64,
    ) -> Result<Self> {
        let n = medium.n();
        if sources.is_empty() || receivers.is_empty() {
            return Err(Error::invalid("acquisition needs at least one source and one receiver"));
        }
        if let Some(p) = sources.iter().chain(&receivers).find(|&&(x, z)| x >= n || z >= n) {
            return Err(Error::invalid(format!("node {p:?} outside the physical {n}x{n} grid")));
        }
        if !(f0 > 0.0) || !(duration > 0.0) {
            return Err(Error::invalid("wavelet frequency and duration must be positive"));
        }
        let dt = medium.max_dt();
        let nt = (duration / dt).ceil() as usize + 1;
        let wavelet = (0..nt).map(|k| ricker(k as f64 * dt, t0, f0)).collect();
        Ok(Acquisition { sources, receivers, dt, nt, f0, t0, wavelet })
    }

    pub fn wavelet(&self) -> &[f64] {
        &self.wavelet
    }

    /// Stable textual description, used in cache keys and manifests.
    pub fn descriptor(&self) -> String {
        format!(
            "src={:?};rcv={:?};dt={:e};nt={};f0={:e};t0={:e}",
            self.sources, self.receivers, self.dt, self.nt, self.f0, self.t0
        )
    }
}

/// Nearest node to coordinate `x` in `[0, 1)`.
pub fn snap(x: f64, n: usize) -> usize {
    ((x * n as f64).round() as usize).min(n - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ricker_peak_and_decay() {
        assert_eq!(ricker(0.3, 0.3, 7.0), 1.0);
        assert!(ricker(100.0, 0.3, 7.0).abs() < 1e-300);
        assert!(ricker(-100.0, 0.3, 7.0).abs() < 1e-300);
    }

    #[test]
    fn ricker_has_zero_mean() {
        // trapezoid rule over +-6/f0; integrand is smooth and decays to ~e^-355
        let (f0, t0) = (5.0, 0.0);
        let m = 200_000;
        let (a, b) = (-6.0 / f0, 6.0 / f0);
        let dx = (b - a) / m as f64;
        let s: f64 = (0..=m)
            .map(|i| {
                let w = if i == 0 || i == m { 0.5 } else { 1.0 };
                w * ricker(a + i as f64 * dx, t0, f0)
            })
            .sum::<f64>()
            * dx;
        assert!(s.abs() < 1e-8, "integral {s}");
    }

    #[test]
    fn damping_vanishes_inside_and_is_mirror_symmetric() {
        let med = Medium::constant(32, 1.0).unwrap();
        let (w, np) = (med.pml_width(), med.padded_n());
        let sig = med.padded_damping();
        for pz in w..w + 32 {
            for px in w..w + 32 {
                assert_eq!(sig[pz * np + px], 0.0);
            }
        }
        // mirror about the padded center node
        for px in 1..np {
            assert_eq!(sig[np * (np / 2) + px], sig[np * (np / 2) + (np - px)]);
        }
        assert!(sig[0] > 0.0);
    }

    #[test]
    fn surface_geometry() {
        let med = Medium::constant(64, 1.0).unwrap();
        let acq = Acquisition::surface(&med).unwrap();
        assert_eq!(acq.sources, vec![(6, 1), (32, 1), (58, 1)]);
        assert_eq!(acq.receivers.len(), 64);
        assert!(acq.dt <= med.max_dt());
        assert!(Medium::constant(63, 1.0).is_err());
        assert!(Medium::new(ModelGrid::constant(16, 0.0)).is_err());
    }
}
