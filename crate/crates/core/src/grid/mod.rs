//! Square model grids on the unit square, 2D Fourier transforms, metrics and
//! the binary grid format shared by every other module.
//!
//! Storage is row-major with the depth index outer: `data[iz * n + ix]`,
//! node `(ix, iz)` sitting at `(ix * h, iz * h)` with `h = 1 / n`.

pub(crate) mod fft;
pub(crate) mod io;

pub use fft::{freq_index, Fft2};
pub use io::{read_grid, read_grid_bytes, write_grid, write_grid_bytes, write_pgm, GRID_MAGIC};

use crate::error::{Error, Result};

/// Smallest supported grid side.
pub const MIN_N: usize = 16;

/// An `n x n` real field on `[0, 1]^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrid {
    n: usize,
    data: Vec<f64>,
}

impl ModelGrid {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n < MIN_N {
            return Err(Error::invalid(format!("grid side {n} below minimum {MIN_N}")));
        }
        if data.len() != n * n {
            return Err(Error::SizeMismatch(format!(
                "grid n={n} expects {} values, got {}",
                n * n,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite grid value at index {i}")));
        }
        Ok(ModelGrid { n, data })
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n >= MIN_N, "grid side {n} below minimum {MIN_N}");
        ModelGrid { n, data: vec![0.0; n * n] }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        let mut g = Self::zeros(n);
        g.data.fill(value);
        g
    }

    /// Builds a grid by evaluating `f(x, z)` at every node.
    pub fn from_fn(n: usize, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut g = Self::zeros(n);
        let h = 1.0 / n as f64;
        for iz in 0..n {
            for ix in 0..n {
                g.data[iz * n + ix] = f(ix as f64 * h, iz as f64 * h);
            }
        }
        g
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, ix: usize, iz: usize) -> f64 {
        self.data[iz * self.n + ix]
    }

    #[inline]
    pub fn set(&mut self, ix: usize, iz: usize, v: f64) {
        self.data[iz * self.n + ix] = v;
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &ModelGrid) -> f64 {
        assert_eq!(self.n, other.n, "grid size mismatch in dot");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    pub fn scaled(&self, a: f64) -> ModelGrid {
        let mut g = self.clone();
        g.scale(a);
        g
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ModelGrid) {
        assert_eq!(self.n, other.n, "grid size mismatch in axpy");
        self.data.iter_mut().zip(&other.data).for_each(|(s, o)| *s += a * o);
    }

    pub fn sub(&self, other: &ModelGrid) -> ModelGrid {
        let mut g = self.clone();
        g.axpy(-1.0, other);
        g
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Index of the entry with the largest magnitude, as `(ix, iz)`.
    pub fn argmax_abs(&self) -> (usize, usize) {
        let (i, _) = self
            .data
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
        (i % self.n, i / self.n)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bilinear resampling onto an `m x m` grid covering the same square.
    pub fn resample(&self, m: usize) -> ModelGrid {
        let n = self.n;
        ModelGrid::from_fn(m, |x, z| {
            let fx = (x * n as f64).min((n - 1) as f64);
            let fz = (z * n as f64).min((n - 1) as f64);
            let (ix, iz) = (fx.floor() as usize, fz.floor() as usize);
            let (ix1, iz1) = ((ix + 1).min(n - 1), (iz + 1).min(n - 1));
            let (tx, tz) = (fx - ix as f64, fz - iz as f64);
            let top = self.get(ix, iz) * (1.0 - tx) + self.get(ix1, iz) * tx;
            let bot = self.get(ix, iz1) * (1.0 - tx) + self.get(ix1, iz1) * tx;
            top * (1.0 - tz) + bot * tz
        })
    }
}

/// Relative error `||reference - candidate|| / ||reference||`.
pub fn mse(reference: &ModelGrid, candidate: &ModelGrid) -> Result<f64> {
    if reference.n() != candidate.n() {
        return Err(Error::SizeMismatch(format!(
            "mse between n={} and n={}",
            reference.n(),
            candidate.n()
        )));
    }
    let den = reference.norm();
    if den == 0.0 {
        return Err(Error::DegenerateReference);
    }
    Ok(reference.sub(candidate).norm() / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize) -> ModelGrid {
        ModelGrid::from_fn(n, |x, z| (3.0 * x).sin() + z * z - 0.3)
    }

    #[test]
    fn mse_examples() {
        let g = ramp(16);
        assert_eq!(mse(&g, &g).unwrap(), 0.0);
        assert!((mse(&g, &ModelGrid::zeros(16)).unwrap() - 1.0).abs() < 1e-15);
        assert!((mse(&g, &g.scaled(2.0)).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mse_degenerate_reference() {
        let z = ModelGrid::zeros(16);
        assert!(matches!(mse(&z, &ramp(16)), Err(Error::DegenerateReference)));
    }

    #[test]
    fn rejects_non_finite_and_bad_length() {
        let mut v = vec![0.0; 256];
        v[7] = f64::NAN;
        assert!(ModelGrid::new(16, v).is_err());
        assert!(ModelGrid::new(16, vec![0.0; 255]).is_err());
        assert!(ModelGrid::new(8, vec![0.0; 64]).is_err());
    }

    #[test]
    fn argmax_reports_coordinates() {
        let mut g = ModelGrid::zeros(16);
        g.set(3, 11, -5.0);
        assert_eq!(g.argmax_abs(), (3, 11));
    }

    proptest! {
        #[test]
        fn mse_scale_invariant(seed in 0u64..1000, a in prop_oneof![-50.0..-0.01f64, 0.01..50.0f64]) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let r = ModelGrid::from_fn(16, |_, _| rng.gen_range(-1.0..1.0));
            let c = ModelGrid::from_fn(16, |x, _| x);
            let base = mse(&r, &c).unwrap();
            let scaled = mse(&r.scaled(a), &c.scaled(a)).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-12 * base.max(1.0));
        }
    }
}
