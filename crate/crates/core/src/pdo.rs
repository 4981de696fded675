//! Elementary pseudodifferential operators with separable symbols
//! `e^{2 pi i lambda.x} e^{i q1 theta} T_q2((|k| - L) / (|k| + L)) |k|^e`,
//! and the fitted expansions built from them.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::fs;
use std::path::Path;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::io::{le_f64s, split_line};
use crate::grid::{freq_index, Fft2, ModelGrid};

const PI: f64 = std::f64::consts::PI;

/// Low-wavenumber floor used by negative-order symbols (one cycle per domain).
pub const K_FLOOR: f64 = 2.0 * PI;

/// One term `(lambda, q1, q2)` of the expansion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SymbolIndex {
    pub lambda: (i32, i32),
    pub q1: i32,
    pub q2: u32,
}

impl SymbolIndex {
    pub fn new(l1: i32, l2: i32, q1: i32, q2: u32) -> Self {
        SymbolIndex { lambda: (l1, l2), q1, q2 }
    }

    /// Partner index whose operator is the conjugate (up to `(-1)^q1`) on real inputs.
    pub fn conjugate(&self) -> Self {
        SymbolIndex { lambda: (-self.lambda.0, -self.lambda.1), q1: -self.q1, q2: self.q2 }
    }

    pub fn is_self_conjugate(&self) -> bool {
        self.lambda == (0, 0) && self.q1 == 0
    }

    /// Representative of each conjugate pair: `(l1, l2, q1)` lexicographically >= 0.
    pub fn is_canonical(&self) -> bool {
        (self.lambda.0, self.lambda.1, self.q1) >= (0, 0, 0)
    }
}

/// Truncation and order of an expansion.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisSpec {
    pub lambda_max: u32,
    pub q1_max: u32,
    pub q2_max: u32,
    pub order: i32,
    /// Rational-Chebyshev map scale, radians per unit length.
    pub l: f64,
}

impl BasisSpec {
    /// Spec with the map scale at a quarter of the Nyquist wavenumber of an `n` grid.
    pub fn new(lambda_max: u32, q1_max: u32, q2_max: u32, order: i32, n: usize) -> Result<Self> {
        Self::with_scale(lambda_max, q1_max, q2_max, order, PI * n as f64 / 4.0)
    }

    pub fn with_scale(lambda_max: u32, q1_max: u32, q2_max: u32, order: i32, l: f64) -> Result<Self> {
        if !(-1..=1).contains(&order) {
            return Err(Error::invalid(format!("symbol order must be -1, 0 or 1, got {order}")));
        }
        if !(l > 0.0) {
            return Err(Error::invalid("rational Chebyshev scale must be positive"));
        }
        Ok(BasisSpec { lambda_max, q1_max, q2_max, order, l })
    }

    pub fn p(&self) -> usize {
        let s = (2 * self.lambda_max + 1) as usize;
        s * s * (2 * self.q1_max + 1) as usize * (self.q2_max + 1) as usize
    }

    /// All indices in lexicographic `(l1, l2, q1, q2)` order.
    pub fn indices(&self) -> Vec<SymbolIndex> {
        let (lm, qm) = (self.lambda_max as i32, self.q1_max as i32);
        let mut out = Vec::with_capacity(self.p());
        for l1 in -lm..=lm {
            for l2 in -lm..=lm {
                for q1 in -qm..=qm {
                    for q2 in 0..=self.q2_max {
                        out.push(SymbolIndex::new(l1, l2, q1, q2));
                    }
                }
            }
        }
        out
    }

    /// Position of `i` in [`BasisSpec::indices`].
    pub fn position(&self, i: &SymbolIndex) -> Option<usize> {
        let (lm, qm) = (self.lambda_max as i32, self.q1_max as i32);
        if i.lambda.0.abs() > lm || i.lambda.1.abs() > lm || i.q1.abs() > qm || i.q2 > self.q2_max {
            return None;
        }
        let s = (2 * lm + 1) as usize;
        let nq1 = (2 * qm + 1) as usize;
        let nq2 = (self.q2_max + 1) as usize;
        let a = (i.lambda.0 + lm) as usize;
        let b = (i.lambda.1 + lm) as usize;
        let c = (i.q1 + qm) as usize;
        Some(((a * s + b) * nq1 + c) * nq2 + i.q2 as usize)
    }
}

/// Chebyshev polynomial of the first kind.
pub fn chebyshev_t(q: u32, s: f64) -> f64 {
    let (mut a, mut b) = (1.0, s);
    match q {
        0 => a,
        _ => {
            for _ in 1..q {
                let c = 2.0 * s * b - a;
                a = b;
                b = c;
            }
            b
        }
    }
}

/// `T_q((r - L) / (r + L))` on `r >= 0`.
pub fn rational_chebyshev(q: u32, r: f64, l: f64) -> f64 {
    chebyshev_t(q, (r - l) / (r + l))
}

fn radial_power(r: f64, order: i32) -> f64 {
    match order {
        1 => r,
        0 => 1.0,
        _ => 1.0 / r.max(K_FLOOR),
    }
}

/// Pointwise symbol value at position `x` and wavevector `k` (radians per unit length).
///
/// At `k = 0` the angular factor is taken as `1` for `q1 = 0` and `0` otherwise;
/// order `-1` uses `max(|k|, K_FLOOR)^{-1}`.
pub fn symbol_eval(i: &SymbolIndex, spec: &BasisSpec, x: (f64, f64), k: (f64, f64)) -> Complex64 {
    let r = k.0.hypot(k.1);
    let modulation = Complex64::from_polar(1.0, 2.0 * PI * (i.lambda.0 as f64 * x.0 + i.lambda.1 as f64 * x.1));
    let angular = if r == 0.0 {
        Complex64::new(if i.q1 == 0 { 1.0 } else { 0.0 }, 0.0)
    } else {
        Complex64::from_polar(1.0, i.q1 as f64 * k.1.atan2(k.0))
    };
    let radial = rational_chebyshev(i.q2, r, spec.l) * radial_power(r, spec.order);
    modulation * angular * radial
}

/// Precomputed multiplier tables for one spec on one grid size.
#[derive(Clone, Debug)]
pub struct PdoBasis {
    spec: BasisSpec,
    n: usize,
    fft: Fft2,
    indices: Vec<SymbolIndex>,
    /// `e^{i q1 theta}` per `q1 in -Q1..=Q1`, averaged over aliases at Nyquist bins.
    angular: Vec<Vec<Complex64>>,
    /// `T_q2(...) |k|^e` per `q2`.
    radial: Vec<Vec<f64>>,
    /// `e^{2 pi i l j / n}` per `l in -lambda_max..=lambda_max`, `j in 0..n`.
    phases: Vec<Vec<Complex64>>,
}

impl PdoBasis {
    pub fn new(spec: BasisSpec, n: usize) -> Result<Self> {
        if n % 2 != 0 || n < crate::grid::MIN_N {
            return Err(Error::invalid(format!("symbol basis needs even n >= 16, got {n}")));
        }
        let qm = spec.q1_max as i32;
        let angular = (-qm..=qm).map(|q1| angular_table(q1, n)).collect();
        let radial = (0..=spec.q2_max)
            .map(|q2| {
                let mut t = vec![0.0; n * n];
                for bz in 0..n {
                    for bx in 0..n {
                        let r = 2.0 * PI * (freq_index(bx, n) as f64).hypot(freq_index(bz, n) as f64);
                        t[bz * n + bx] = rational_chebyshev(q2, r, spec.l) * radial_power(r, spec.order);
                    }
                }
                t
            })
            .collect();
        let lm = spec.lambda_max as i32;
        let phases = (-lm..=lm).map(|l| (0..n).map(|j| phase(l, j, n)).collect()).collect();
        Ok(PdoBasis { indices: spec.indices(), spec, n, fft: Fft2::square(n), angular, radial, phases })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn indices(&self) -> &[SymbolIndex] {
        &self.indices
    }

    pub fn p(&self) -> usize {
        self.indices.len()
    }

    /// Fourier multiplier of the `(q1, q2)` part of an index.
    fn multiplier(&self, i: &SymbolIndex, bin: usize) -> Complex64 {
        self.angular[(i.q1 + self.spec.q1_max as i32) as usize][bin] * self.radial[i.q2 as usize][bin]
    }

    fn spectrum(&self, f: &ModelGrid) -> Result<Vec<Complex64>> {
        if f.n() != self.n {
            return Err(Error::SizeMismatch(format!("grid n={} vs basis n={}", f.n(), self.n)));
        }
        Ok(self.fft.forward_real(f.data()))
    }

    /// `B_i f`: multiplier in Fourier space, then modulation by `e^{2 pi i lambda.x}`.
    pub fn apply_elementary(&self, i: &SymbolIndex, f: &ModelGrid) -> Result<Vec<Complex64>> {
        if self.spec.position(i).is_none() {
            return Err(Error::invalid(format!("index {i:?} outside the basis truncation")));
        }
        let mut s = self.spectrum(f)?;
        for (bin, v) in s.iter_mut().enumerate() {
            *v *= self.multiplier(i, bin);
        }
        self.fft.inverse(&mut s);
        modulate(&mut s, self.n, i.lambda);
        Ok(s)
    }

    /// `sum_i c_i B_i f`. Terms sharing `(q1, q2)` share one inverse
    /// transform of `m_q * FFT(f)`; their modulations combine into the
    /// trigonometric polynomial `sum_lambda c e^{2 pi i lambda.x}`, evaluated
    /// separably on the grid and applied pointwise.
    pub fn apply_complex(&self, coeffs: &[Complex64], f: &ModelGrid) -> Result<Vec<Complex64>> {
        if coeffs.len() != self.p() {
            return Err(Error::SizeMismatch(format!("{} coefficients for a basis of {}", coeffs.len(), self.p())));
        }
        let n = self.n;
        let fhat = self.spectrum(f)?;
        let nq1 = (2 * self.spec.q1_max + 1) as usize;
        let nq2 = (self.spec.q2_max + 1) as usize;
        let nl = (2 * self.spec.lambda_max + 1) as usize;
        let classes: Vec<(usize, usize)> = (0..nq1).flat_map(|a| (0..nq2).map(move |q2| (a, q2))).collect();
        let parts = crate::par::map_slice(&classes, |&(a, q2)| {
            // coefficient of (l1, l2) within this class, laid out [l2][l1]
            let mut c = vec![Complex64::default(); nl * nl];
            for l1 in 0..nl {
                for l2 in 0..nl {
                    c[l2 * nl + l1] = coeffs[((l1 * nl + l2) * nq1 + a) * nq2 + q2];
                }
            }
            if c.iter().all(|v| *v == Complex64::default()) {
                return None;
            }
            let mut g: Vec<Complex64> =
                fhat.iter().zip(&self.angular[a]).zip(&self.radial[q2]).map(|((v, m), r)| v * m * r).collect();
            self.fft.inverse(&mut g);
            // rows[l2][ix] = sum_l1 c e^{2 pi i l1 ix / n}
            let mut rows = vec![Complex64::default(); nl * n];
            for l2 in 0..nl {
                let row = &mut rows[l2 * n..(l2 + 1) * n];
                for l1 in 0..nl {
                    let cv = c[l2 * nl + l1];
                    if cv != Complex64::default() {
                        row.iter_mut().zip(&self.phases[l1]).for_each(|(r, e)| *r += cv * e);
                    }
                }
            }
            for iz in 0..n {
                let out = &mut g[iz * n..(iz + 1) * n];
                let mut poly = vec![Complex64::default(); n];
                for l2 in 0..nl {
                    let ez = self.phases[l2][iz];
                    poly.iter_mut().zip(&rows[l2 * n..(l2 + 1) * n]).for_each(|(p, r)| *p += ez * r);
                }
                out.iter_mut().zip(&poly).for_each(|(o, p)| *o *= p);
            }
            Some(g)
        });
        let mut acc = vec![Complex64::default(); n * n];
        for g in parts.into_iter().flatten() {
            acc.iter_mut().zip(&g).for_each(|(a, v)| *a += v);
        }
        Ok(acc)
    }

    /// Real part of [`PdoBasis::apply_complex`]; the imaginary residual is
    /// roundoff when the coefficients are conjugate-symmetric.
    pub fn apply_fitted(&self, coeffs: &[Complex64], f: &ModelGrid) -> Result<ModelGrid> {
        let out = self.apply_complex(coeffs, f)?;
        ModelGrid::new(self.n, out.iter().map(|v| v.re).collect())
    }

    /// Number of real parameters; equals `p`.
    pub fn real_dim(&self) -> usize {
        self.p()
    }

    /// Real design columns for input `x`: for every canonical index,
    /// `Re(B_i x)`, or `sqrt(2) Re(B_i x)` and `sqrt(2) Im(B_i x)` when the
    /// index has a distinct conjugate. The scaling makes the real parameters an
    /// isometric image of the complex coefficients.
    ///
    /// Columns sharing `(q1, q2)` reuse one inverse transform; the `lambda`
    /// modulation is applied pointwise.
    pub fn real_columns(&self, x: &ModelGrid) -> Result<Vec<Vec<f64>>> {
        let n = self.n;
        let xhat = self.spectrum(x)?;
        let nq1 = (2 * self.spec.q1_max + 1) as usize;
        let nq2 = (self.spec.q2_max + 1) as usize;
        let mut base = Vec::with_capacity(nq1 * nq2);
        for a in 0..nq1 {
            for q2 in 0..nq2 {
                let mut s: Vec<Complex64> =
                    xhat.iter().enumerate().map(|(b, v)| v * self.angular[a][b] * self.radial[q2][b]).collect();
                self.fft.inverse(&mut s);
                base.push(s);
            }
        }
        let mut cols = Vec::with_capacity(self.p());
        for i in self.indices.iter().filter(|i| i.is_canonical()) {
            let q = (i.q1 + self.spec.q1_max as i32) as usize * nq2 + i.q2 as usize;
            let mut v = base[q].clone();
            modulate(&mut v, n, i.lambda);
            if i.is_self_conjugate() {
                cols.push(v.iter().map(|c| c.re).collect());
            } else {
                cols.push(v.iter().map(|c| SQRT_2 * c.re).collect());
                cols.push(v.iter().map(|c| SQRT_2 * c.im).collect());
            }
        }
        Ok(cols)
    }

    /// Maps real parameters (ordered as [`PdoBasis::real_columns`]) to the full
    /// conjugate-symmetric complex coefficient vector.
    pub fn coeffs_from_real(&self, params: &[f64]) -> Result<Vec<Complex64>> {
        if params.len() != self.p() {
            return Err(Error::SizeMismatch(format!("{} real parameters for a basis of {}", params.len(), self.p())));
        }
        let mut c = vec![Complex64::default(); self.p()];
        let mut it = params.iter();
        for i in self.indices.iter().filter(|i| i.is_canonical()) {
            let pos = self.spec.position(i).expect("own index");
            if i.is_self_conjugate() {
                c[pos] = Complex64::new(*it.next().expect("length checked"), 0.0);
            } else {
                let a = *it.next().expect("length checked");
                let b = *it.next().expect("length checked");
                let ci = Complex64::new(a, -b) * FRAC_1_SQRT_2;
                c[pos] = ci;
                let sign = if i.q1 % 2 == 0 { 1.0 } else { -1.0 };
                c[self.spec.position(&i.conjugate()).expect("symmetric truncation")] = ci.conj() * sign;
            }
        }
        Ok(c)
    }

    /// Inverse of [`PdoBasis::coeffs_from_real`] for conjugate-symmetric input.
    pub fn real_from_coeffs(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.p());
        for i in self.indices.iter().filter(|i| i.is_canonical()) {
            let c = coeffs[self.spec.position(i).expect("own index")];
            if i.is_self_conjugate() {
                out.push(c.re);
            } else {
                out.push(SQRT_2 * c.re);
                out.push(-SQRT_2 * c.im);
            }
        }
        out
    }
}

fn angular_table(q1: i32, n: usize) -> Vec<Complex64> {
    let half = (n / 2) as i64;
    let mut t = vec![Complex64::default(); n * n];
    for bz in 0..n {
        let kz = freq_index(bz, n);
        // the Nyquist bin stands for both +n/2 and -n/2
        let zs: &[i64] = if kz == -half { &[-half, half] } else { &[kz] };
        for bx in 0..n {
            let kx = freq_index(bx, n);
            if kx == 0 && kz == 0 {
                t[bz * n + bx] = Complex64::new(if q1 == 0 { 1.0 } else { 0.0 }, 0.0);
                continue;
            }
            let xs: &[i64] = if kx == -half { &[-half, half] } else { &[kx] };
            let mut acc = Complex64::default();
            for &a in xs {
                for &b in zs {
                    acc += Complex64::from_polar(1.0, q1 as f64 * (b as f64).atan2(a as f64));
                }
            }
            t[bz * n + bx] = acc / (xs.len() * zs.len()) as f64;
        }
    }
    t
}

/// `e^{2 pi i l j / n}` with the exponent reduced mod `n` first.
fn phase(l: i32, j: usize, n: usize) -> Complex64 {
    let r = (l as i64 * j as i64).rem_euclid(n as i64);
    Complex64::from_polar(1.0, 2.0 * PI * r as f64 / n as f64)
}

/// Multiplies by `e^{2 pi i lambda.x}` on the grid nodes `x = (ix, iz) / n`.
fn modulate(v: &mut [Complex64], n: usize, (l1, l2): (i32, i32)) {
    if (l1, l2) == (0, 0) {
        return;
    }
    let ex: Vec<Complex64> = (0..n).map(|i| phase(l1, i, n)).collect();
    for iz in 0..n {
        let ez = phase(l2, iz, n);
        for (v, e) in v[iz * n..(iz + 1) * n].iter_mut().zip(&ex) {
            *v *= ez * e;
        }
    }
}

/// Complex coefficients over a basis spec, i.e. the operator `sum_i c_i B_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedOperator {
    pub spec: BasisSpec,
    pub coeffs: Vec<Complex64>,
}

impl FittedOperator {
    pub fn new(spec: BasisSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != spec.p() {
            return Err(Error::SizeMismatch(format!("{} coefficients for p={}", coeffs.len(), spec.p())));
        }
        Ok(FittedOperator { spec, coeffs })
    }

    /// Applies the operator to `f`; builds the multiplier tables for `f.n()`.
    pub fn apply(&self, f: &ModelGrid) -> Result<ModelGrid> {
        PdoBasis::new(self.spec.clone(), f.n())?.apply_fitted(&self.coeffs, f)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let s = &self.spec;
        let mut out = b"PKSYM1\n".to_vec();
        out.extend_from_slice(
            format!("{} {} {} {} {} {}\n", s.lambda_max, s.q1_max, s.q2_max, s.order, s.l, s.p()).as_bytes(),
        );
        for c in &self.coeffs {
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes.strip_prefix(b"PKSYM1\n").ok_or_else(|| Error::format("PKSYM1", "bad magic"))?;
        let (line, payload) = split_line(rest).ok_or_else(|| Error::format("PKSYM1", "missing spec line"))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::format("PKSYM1", format!("bad spec line {line:?}"));
        if f.len() != 6 {
            return Err(bad());
        }
        let spec = BasisSpec::with_scale(
            f[0].parse().map_err(|_| bad())?,
            f[1].parse().map_err(|_| bad())?,
            f[2].parse().map_err(|_| bad())?,
            f[3].parse().map_err(|_| bad())?,
            f[4].parse().map_err(|_| bad())?,
        )?;
        let p: usize = f[5].parse().map_err(|_| bad())?;
        if p != spec.p() {
            return Err(Error::format("PKSYM1", format!("p={p} disagrees with truncation ({})", spec.p())));
        }
        if payload.len() != 16 * p {
            return Err(Error::format("PKSYM1", format!("expected {} payload bytes, got {}", 16 * p, payload.len())));
        }
        let v = le_f64s(payload);
        let coeffs = v.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        FittedOperator::new(spec, coeffs)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
