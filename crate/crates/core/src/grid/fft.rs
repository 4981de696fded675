use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Signed DFT index of bin `i` for a transform of length `n`
/// (`0..n/2` positive, the rest negative; for even `n` the Nyquist bin is `-n/2`).
#[inline]
pub fn freq_index(i: usize, n: usize) -> i64 {
    if i < (n + 1) / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Planned 2D complex transform on a `rows x cols` row-major array.
///
/// Forward is unnormalized; inverse carries the `1 / (rows * cols)` factor.
#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.rows, self.cols)
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self::with_planner(&mut planner, rows, cols)
    }

    pub fn square(n: usize) -> Self {
        Self::new(n, n)
    }

    pub fn with_planner(planner: &mut FftPlanner<f64>, rows: usize, cols: usize) -> Self {
        Fft2 {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_inv, &self.col_inv);
        let s = 1.0 / (self.rows * self.cols) as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    /// Inverse transform without the normalization factor.
    pub fn inverse_unnormalized(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_inv, &self.col_inv);
    }

    /// Forward transform of a real array.
    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    fn run(&self, data: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        let (r, c) = (self.rows, self.cols);
        assert_eq!(data.len(), r * c, "fft buffer length mismatch");
        let mut scratch =
            vec![Complex64::default(); row.get_inplace_scratch_len().max(col.get_inplace_scratch_len())];
        row.process_with_scratch(data, &mut scratch[..row.get_inplace_scratch_len()]);
        let mut t = vec![Complex64::default(); r * c];
        transpose(data, &mut t, r, c);
        col.process_with_scratch(&mut t, &mut scratch[..col.get_inplace_scratch_len()]);
        transpose(&t, data, c, r);
    }
}

/// Out-of-place transpose of a `rows x cols` array.
pub(crate) fn transpose<T: Copy>(src: &[T], dst: &mut [T], rows: usize, cols: usize) {
    const B: usize = 16;
    for rb in (0..rows).step_by(B) {
        for cb in (0..cols).step_by(B) {
            for i in rb..(rb + B).min(rows) {
                for j in cb..(cb + B).min(cols) {
                    dst[j * rows + i] = src[i * cols + j];
                }
            }
        }
    }
}
