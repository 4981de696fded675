use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{freq_index, fft::transpose};

/// Periodic spectral Laplacian on an `np x np` grid with spacing `h`.
///
/// The discrete operator is a real symmetric circulant, so applying it is
/// its own transpose up to roundoff.
#[derive(Clone)]
pub struct SpectralLaplacian {
    np: usize,
    half: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    /// `-|k|^2 / np^2` in transposed (half x np) layout.
    mult: Vec<f64>,
}

/// Per-caller buffers for [`SpectralLaplacian::apply`].
pub struct LaplacianScratch {
    real: Vec<f64>,
    spec: Vec<Complex64>,
    tspec: Vec<Complex64>,
    fft: Vec<Complex64>,
}

impl SpectralLaplacian {
    pub fn new(np: usize, h: f64) -> Self {
        assert!(np % 2 == 0, "padded size must be even");
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        let half = np / 2 + 1;
        let dk = 2.0 * std::f64::consts::PI / (np as f64 * h);
        let norm = 1.0 / (np * np) as f64;
        let mut mult = vec![0.0; half * np];
        for kx in 0..half {
            let fx = kx as f64 * dk;
            for kz in 0..np {
                let fz = freq_index(kz, np) as f64 * dk;
                mult[kx * np + kz] = -(fx * fx + fz * fz) * norm;
            }
        }
        SpectralLaplacian {
            np,
            half,
            r2c: rp.plan_fft_forward(np),
            c2r: rp.plan_fft_inverse(np),
            col_fwd: cp.plan_fft_forward(np),
            col_inv: cp.plan_fft_inverse(np),
            mult,
        }
    }

    pub fn np(&self) -> usize {
        self.np
    }

    pub fn scratch(&self) -> LaplacianScratch {
        let np = self.np;
        let len = self
            .col_fwd
            .get_inplace_scratch_len()
            .max(self.col_inv.get_inplace_scratch_len())
            .max(self.r2c.get_scratch_len())
            .max(self.c2r.get_scratch_len());
        LaplacianScratch {
            real: vec![0.0; np * np],
            spec: vec![Complex64::default(); np * self.half],
            tspec: vec![Complex64::default(); np * self.half],
            fft: vec![Complex64::default(); len],
        }
    }

    /// `out = L input`, both row-major `np x np`.
    pub fn apply(&self, input: &[f64], out: &mut [f64], s: &mut LaplacianScratch) {
        let (np, half) = (self.np, self.half);
        s.real.copy_from_slice(input);
        for (row, spec) in s.real.chunks_exact_mut(np).zip(s.spec.chunks_exact_mut(half)) {
            self.r2c
                .process_with_scratch(row, spec, &mut s.fft[..self.r2c.get_scratch_len()])
                .expect("r2c length");
        }
        transpose(&s.spec, &mut s.tspec, np, half);
        let cs = self.col_fwd.get_inplace_scratch_len();
        self.col_fwd.process_with_scratch(&mut s.tspec, &mut s.fft[..cs]);
        for (v, m) in s.tspec.iter_mut().zip(&self.mult) {
            *v *= *m;
        }
        let cs = self.col_inv.get_inplace_scratch_len();
        self.col_inv.process_with_scratch(&mut s.tspec, &mut s.fft[..cs]);
        transpose(&s.tspec, &mut s.spec, half, np);
        for (spec, row) in s.spec.chunks_exact_mut(half).zip(out.chunks_exact_mut(np)) {
            // DC and Nyquist bins of a real row carry roundoff imaginary parts
            spec[0].im = 0.0;
            spec[half - 1].im = 0.0;
            self.c2r
                .process_with_scratch(spec, row, &mut s.fft[..self.c2r.get_scratch_len()])
                .expect("c2r length");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn plane_wave_eigenvalue() {
        let np = 40;
        let h = 1.0 / 32.0;
        let lap = SpectralLaplacian::new(np, h);
        let len = np as f64 * h;
        let (a, b) = (3.0, 5.0);
        let k2 = (2.0 * std::f64::consts::PI / len).powi(2) * (a * a + b * b);
        let f: Vec<f64> = (0..np * np)
            .map(|i| {
                let (x, z) = ((i % np) as f64 * h, (i / np) as f64 * h);
                (2.0 * std::f64::consts::PI * (a * x + b * z) / len).cos()
            })
            .collect();
        let mut out = vec![0.0; np * np];
        lap.apply(&f, &mut out, &mut lap.scratch());
        for (o, v) in out.iter().zip(&f) {
            assert!((o + k2 * v).abs() < 1e-9 * k2);
        }
    }

    #[test]
    fn symmetric_to_roundoff() {
        let np = 36;
        let lap = SpectralLaplacian::new(np, 0.03);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let u: Vec<f64> = (0..np * np).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..np * np).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut s = lap.scratch();
        let (mut lu, mut lv) = (vec![0.0; np * np], vec![0.0; np * np]);
        lap.apply(&u, &mut lu, &mut s);
        lap.apply(&v, &mut lv, &mut s);
        let a: f64 = lu.iter().zip(&v).map(|(x, y)| x * y).sum();
        let b: f64 = u.iter().zip(&lv).map(|(x, y)| x * y).sum();
        assert!((a - b).abs() < 1e-12 * a.abs().max(b.abs()));
    }
}
