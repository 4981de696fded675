//! Tight frame of curvelets built by frequency windowing.
//!
//! The spectrum is first lifted onto a symmetric `(n+1) x (n+1)` grid of
//! signed indices `-n/2..=n/2` (Nyquist rows and columns duplicated with
//! weight `1/sqrt(2)`), which keeps windows exactly symmetric under `k -> -k`.
//! Smooth radial and angular windows with `sum U^2 = 1` cut it into wedges;
//! each wedge is wrapped into its bounding rectangle and inverse-transformed
//! there, so every wedge carries its own translation lattice.

use std::fs;
use std::io::Write;
use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{Fft2, ModelGrid};
use crate::par;

const PI: f64 = std::f64::consts::PI;

/// Angular transition half-width, as a fraction of the wedge spacing.
const ANGULAR_TRANSITION: f64 = 0.25;
/// Angles at the second-coarsest scale.
const COARSE_ANGLES: usize = 16;

/// Smooth step on `[0, 1]` with `nu(t) + nu(1 - t) = 1`.
fn meyer(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t.powi(4) * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t.powi(3))
}

/// Low-pass profile: 1 below `0.75 rho`, 0 above `1.25 rho`.
fn lowpass(r: f64, rho: f64) -> f64 {
    if r <= 0.75 * rho {
        1.0
    } else if r >= 1.25 * rho {
        0.0
    } else {
        (0.5 * PI * meyer((r - 0.75 * rho) / (0.5 * rho))).cos()
    }
}

/// Angular window around direction `l` out of `count`.
fn angular(theta: f64, l: usize, count: usize) -> f64 {
    let spacing = 2.0 * PI / count as f64;
    let mut t = (theta / spacing - l as f64).rem_euclid(count as f64);
    if t >= count as f64 / 2.0 {
        t -= count as f64;
    }
    let t = t.abs();
    let d = ANGULAR_TRANSITION;
    if t <= 0.5 - d {
        1.0
    } else if t >= 0.5 + d {
        0.0
    } else {
        (0.5 * PI * meyer((t - (0.5 - d)) / (2.0 * d))).cos()
    }
}

/// Position of an atom: scale, angle within the scale, lattice node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FrameIndex {
    pub scale: usize,
    pub angle: usize,
    pub m: (usize, usize),
}

/// One frequency wedge and its translation lattice.
#[derive(Clone, Debug)]
pub struct Wedge {
    pub scale: usize,
    pub angle: usize,
    /// Lowest extended index `(k1, k2)` of the bounding box.
    pub lo: (i64, i64),
    /// Box side lengths `(L1, L2)`; lattice is `m / L`.
    pub len: (usize, usize),
    /// Window values on the box, `[k2 - lo.1][k1 - lo.0]`.
    window: Vec<f64>,
    /// Index of the wedge holding the conjugate coefficients.
    pub conj: usize,
    /// Offset of this wedge's coefficients in the flat array.
    pub offset: usize,
    /// Norm shared by every atom of the wedge.
    pub atom_norm: f64,
    /// Center wavevector, radians per unit length; zero for the coarse wedge.
    pub k_center: (f64, f64),
    /// Window-energy weighted mean of `|k|`, radians per unit length.
    pub mean_radius: f64,
    fft: Fft2,
}

impl Wedge {
    pub fn count(&self) -> usize {
        self.len.0 * self.len.1
    }

    pub fn is_coarse(&self) -> bool {
        self.scale == 0
    }

    pub fn lattice_step(&self) -> (f64, f64) {
        (1.0 / self.len.0 as f64, 1.0 / self.len.1 as f64)
    }

    /// True when the two windows share a spectral bin of an `n x n` grid
    /// (the two signed Nyquist copies count as one bin).
    pub fn overlaps(&self, other: &Wedge, n: usize) -> bool {
        let half = (n / 2) as i64;
        let alias = |k: i64| if k.abs() == half { -k } else { k };
        for d2 in 0..self.len.1 {
            for d1 in 0..self.len.0 {
                if self.window[d2 * self.len.0 + d1] == 0.0 {
                    continue;
                }
                let k = (self.lo.0 + d1 as i64, self.lo.1 + d2 as i64);
                let copies = [k, (alias(k.0), k.1), (k.0, alias(k.1)), (alias(k.0), alias(k.1))];
                if copies.iter().any(|&q| other.window_at(q) > 0.0) {
                    return true;
                }
            }
        }
        false
    }

    /// Window value at extended index `k` (zero outside the box).
    pub fn window_at(&self, k: (i64, i64)) -> f64 {
        let (d1, d2) = (k.0 - self.lo.0, k.1 - self.lo.1);
        if d1 < 0 || d2 < 0 || d1 >= self.len.0 as i64 || d2 >= self.len.1 as i64 {
            return 0.0;
        }
        self.window[d2 as usize * self.len.0 + d1 as usize]
    }
}

/// Geometric description of one atom.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtomInfo {
    pub index: FrameIndex,
    pub wedge: usize,
    /// Position on the unit square, `(x, z)`.
    pub x: (f64, f64),
    /// Wavevector, radians per unit length.
    pub k: (f64, f64),
    pub norm: f64,
    /// Flat id of the conjugate partner.
    pub conj: usize,
}

/// Immutable frame layout for one grid size.
#[derive(Clone, Debug)]
pub struct CurveletPlan {
    n: usize,
    scales: usize,
    angles: Vec<usize>,
    wedges: Vec<Wedge>,
    total: usize,
    fft: Fft2,
}

impl CurveletPlan {
    /// Plan for an `n x n` grid, `n` a power of two and at least 32.
    pub fn new(n: usize) -> Result<Self> {
        if !n.is_power_of_two() || n < 32 {
            return Err(Error::invalid(format!("curvelet frame needs n a power of two >= 32, got {n}")));
        }
        let scales = n.trailing_zeros() as usize - 3;
        let angles: Vec<usize> =
            (0..scales).map(|j| if j == 0 { 1 } else { COARSE_ANGLES << (j / 2) }).collect();
        let rho: Vec<f64> = (0..scales).map(|j| n as f64 / 3.0 / 2f64.powi((scales - 1 - j) as i32)).collect();
        let radial = |j: usize, r: f64| -> f64 {
            if j == 0 {
                return lowpass(r, rho[0]);
            }
            let inner = lowpass(r, rho[j - 1]);
            let outer = if j + 1 == scales { 1.0 } else { lowpass(r, rho[j]) };
            (outer * outer - inner * inner).max(0.0).sqrt()
        };
        let half = (n / 2) as i64;
        let mut planner = FftPlanner::new();
        let mut wedges: Vec<Wedge> = Vec::new();
        for j in 0..scales {
            let count = angles[j];
            let canonical = if j == 0 { 1 } else { count / 2 };
            let first = wedges.len();
            for l in 0..canonical {
                let value = |k1: i64, k2: i64| -> f64 {
                    let r = (k1 as f64).hypot(k2 as f64);
                    let w = radial(j, r);
                    if j == 0 || w == 0.0 {
                        w
                    } else {
                        w * angular((k2 as f64).atan2(k1 as f64), l, count)
                    }
                };
                wedges.push(build_wedge(j, l, half, &value, &mut planner));
            }
            if j > 0 {
                // partners live at angle l + count/2 with mirrored windows
                for l in 0..canonical {
                    let src = first + l;
                    let mirrored = mirror(&wedges[src], l + canonical, &mut planner);
                    wedges.push(mirrored);
                    let dst = wedges.len() - 1;
                    wedges[src].conj = dst;
                    wedges[dst].conj = src;
                }
            } else {
                wedges[first].conj = first;
            }
        }
        // order wedges by (scale, angle) and lay out offsets
        wedges.sort_by_key(|w| (w.scale, w.angle));
        let pos: std::collections::HashMap<(usize, usize), usize> =
            wedges.iter().enumerate().map(|(i, w)| ((w.scale, w.angle), i)).collect();
        let angle_count = angles.clone();
        for i in 0..wedges.len() {
            let (s, a) = (wedges[i].scale, wedges[i].angle);
            wedges[i].conj = if s == 0 { i } else { pos[&(s, (a + angle_count[s] / 2) % angle_count[s])] };
        }
        let mut total = 0;
        for w in wedges.iter_mut() {
            w.offset = total;
            total += w.count();
        }
        Ok(CurveletPlan { n, scales, angles, wedges, total, fft: Fft2::square(n) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scales(&self) -> usize {
        self.scales
    }

    pub fn angles(&self, scale: usize) -> usize {
        self.angles[scale]
    }

    pub fn wedges(&self) -> &[Wedge] {
        &self.wedges
    }

    /// Total number of atoms.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Stable one-line description used in file headers and cache keys.
    pub fn descriptor(&self) -> String {
        let mut s = format!("n={} scales={} angles={:?} boxes=", self.n, self.scales, self.angles);
        for w in &self.wedges {
            s.push_str(&format!("{}x{},", w.len.0, w.len.1));
        }
        s
    }

    pub fn wedge_index(&self, scale: usize, angle: usize) -> Option<usize> {
        self.wedges.iter().position(|w| w.scale == scale && w.angle == angle)
    }

    /// Flat id of a frame index.
    pub fn id(&self, idx: &FrameIndex) -> Result<usize> {
        let w = self
            .wedge_index(idx.scale, idx.angle)
            .ok_or_else(|| Error::invalid(format!("no wedge at scale {} angle {}", idx.scale, idx.angle)))?;
        let wd = &self.wedges[w];
        if idx.m.0 >= wd.len.0 || idx.m.1 >= wd.len.1 {
            return Err(Error::invalid(format!("lattice node {:?} outside {:?}", idx.m, wd.len)));
        }
        Ok(wd.offset + idx.m.1 * wd.len.0 + idx.m.0)
    }

    /// Wedge holding flat id `id`.
    pub fn wedge_of(&self, id: usize) -> usize {
        self.wedges.partition_point(|w| w.offset + w.count() <= id)
    }

    pub fn atom(&self, id: usize) -> AtomInfo {
        let wi = self.wedge_of(id);
        let w = &self.wedges[wi];
        let local = id - w.offset;
        let m = (local % w.len.0, local / w.len.0);
        let conj = &self.wedges[w.conj];
        AtomInfo {
            index: FrameIndex { scale: w.scale, angle: w.angle, m },
            wedge: wi,
            x: (m.0 as f64 / w.len.0 as f64, m.1 as f64 / w.len.1 as f64),
            k: w.k_center,
            norm: w.atom_norm,
            conj: conj.offset + local,
        }
    }

    /// Center `(x_mu, k_mu)` of an atom.
    pub fn center(&self, idx: &FrameIndex) -> Result<((f64, f64), (f64, f64))> {
        let a = self.atom(self.id(idx)?);
        Ok((a.x, a.k))
    }

    pub fn atom_norm(&self, idx: &FrameIndex) -> Result<f64> {
        Ok(self.atom(self.id(idx)?).norm)
    }

    fn lift_weight(&self, k: i64) -> f64 {
        if k.unsigned_abs() as usize == self.n / 2 {
            std::f64::consts::FRAC_1_SQRT_2
        } else {
            1.0
        }
    }

    fn bin(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    /// Frame coefficients of a complex field.
    pub fn analyze_complex(&self, f: &[Complex64]) -> Result<CurveletCoeffs> {
        let n = self.n;
        if f.len() != n * n {
            return Err(Error::SizeMismatch(format!("field of {} values for an n={n} frame", f.len())));
        }
        let mut fhat = f.to_vec();
        self.fft.forward(&mut fhat);
        let blocks = par::map_slice(&self.wedges, |w| {
            let (l1, l2) = w.len;
            let mut a = vec![Complex64::default(); l1 * l2];
            for d2 in 0..l2 {
                let k2 = w.lo.1 + d2 as i64;
                let (b2, w2) = (self.bin(k2), self.lift_weight(k2));
                for d1 in 0..l1 {
                    let u = w.window[d2 * l1 + d1];
                    if u == 0.0 {
                        continue;
                    }
                    let k1 = w.lo.0 + d1 as i64;
                    let v = fhat[b2 * n + self.bin(k1)] * (u * w2 * self.lift_weight(k1));
                    let slot = self.wrap(k2, l2) * l1 + self.wrap(k1, l1);
                    a[slot] = v;
                }
            }
            w.fft.inverse_unnormalized(&mut a);
            let s = 1.0 / (n as f64 * ((l1 * l2) as f64).sqrt());
            a.iter_mut().for_each(|v| *v *= s);
            a
        });
        Ok(CurveletCoeffs { n, data: blocks.concat() })
    }

    pub fn analyze(&self, f: &ModelGrid) -> Result<CurveletCoeffs> {
        if f.n() != self.n {
            return Err(Error::SizeMismatch(format!("grid n={} vs frame n={}", f.n(), self.n)));
        }
        let c: Vec<Complex64> = f.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.analyze_complex(&c)
    }

    /// Adjoint of [`CurveletPlan::analyze_complex`] (and its inverse, the frame being tight).
    pub fn synthesize_complex(&self, c: &CurveletCoeffs) -> Result<Vec<Complex64>> {
        let n = self.n;
        if c.n != n || c.data.len() != self.total {
            return Err(Error::SizeMismatch(format!(
                "coefficients for n={} ({} atoms) vs plan n={n} ({} atoms)",
                c.n,
                c.data.len(),
                self.total
            )));
        }
        let blocks = par::map_slice(&self.wedges, |w| {
            let mut a = c.data[w.offset..w.offset + w.count()].to_vec();
            w.fft.forward(&mut a);
            a
        });
        let mut fhat = vec![Complex64::default(); n * n];
        for (w, a) in self.wedges.iter().zip(&blocks) {
            let (l1, l2) = w.len;
            let s = 1.0 / ((l1 * l2) as f64).sqrt();
            for d2 in 0..l2 {
                let k2 = w.lo.1 + d2 as i64;
                let (b2, w2) = (self.bin(k2), self.lift_weight(k2));
                for d1 in 0..l1 {
                    let u = w.window[d2 * l1 + d1];
                    if u == 0.0 {
                        continue;
                    }
                    let k1 = w.lo.0 + d1 as i64;
                    let slot = self.wrap(k2, l2) * l1 + self.wrap(k1, l1);
                    fhat[b2 * n + self.bin(k1)] += a[slot] * (s * u * w2 * self.lift_weight(k1));
                }
            }
        }
        self.fft.inverse_unnormalized(&mut fhat);
        let s = 1.0 / n as f64;
        fhat.iter_mut().for_each(|v| *v *= s);
        Ok(fhat)
    }

    /// Real part of the synthesis; exact for conjugate-symmetric coefficients.
    pub fn synthesize(&self, c: &CurveletCoeffs) -> Result<ModelGrid> {
        let f = self.synthesize_complex(c)?;
        ModelGrid::new(self.n, f.iter().map(|v| v.re).collect())
    }

    pub fn zeros(&self) -> CurveletCoeffs {
        CurveletCoeffs { n: self.n, data: vec![Complex64::default(); self.total] }
    }

    fn wrap(&self, k: i64, l: usize) -> usize {
        k.rem_euclid(l as i64) as usize
    }

    /// Relative error of the diagonal approximation of the zeroth-order
    /// operator with symbol `a(x, k) / |k|`: every coefficient is scaled by the
    /// symbol sampled at its atom's center, compared against the exact
    /// operator evaluated densely. `f` must have no content below `k_min`.
    ///
    /// Isotropic atoms have no direction; they sample the symbol at their
    /// wedge's mean radius along `k_x`.
    pub fn diag_approx_error(
        &self,
        a: impl Fn((f64, f64), (f64, f64)) -> Complex64 + Sync,
        f: &ModelGrid,
        k_min: f64,
    ) -> Result<f64> {
        if k_min < crate::pdo::K_FLOOR {
            return Err(Error::invalid(format!("k_min {k_min} below the floor {}", crate::pdo::K_FLOOR)));
        }
        let n = self.n;
        let fhat = self.fft.forward_real(f.data());
        let tol = 1e-12 * fhat.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        for bz in 0..n {
            for bx in 0..n {
                let k = 2.0 * PI * (crate::grid::freq_index(bx, n) as f64).hypot(crate::grid::freq_index(bz, n) as f64);
                if k < k_min && fhat[bz * n + bx].norm() > tol {
                    return Err(Error::invalid("test field has content below k_min"));
                }
            }
        }
        let order_zero = |x: (f64, f64), k: (f64, f64)| a(x, k) / k.0.hypot(k.1);
        // diagonal approximation
        let mut c = self.analyze(f)?;
        for id in 0..self.total {
            let at = self.atom(id);
            let k = if self.wedges[at.wedge].is_coarse() { (self.coarse_radius(), 0.0) } else { at.k };
            c.data[id] *= order_zero(at.x, k);
        }
        let approx = self.synthesize_complex(&c)?;
        // exact operator, summing only over nonzero spectral bins
        let support: Vec<(usize, (f64, f64))> = (0..n * n)
            .filter(|&b| fhat[b].norm() > tol)
            .map(|b| {
                let (bx, bz) = (b % n, b / n);
                (b, (2.0 * PI * crate::grid::freq_index(bx, n) as f64, 2.0 * PI * crate::grid::freq_index(bz, n) as f64))
            })
            .collect();
        let rows = par::map_range(n, |iz| {
            let mut row = vec![Complex64::default(); n];
            for (ix, out) in row.iter_mut().enumerate() {
                let x = (ix as f64 / n as f64, iz as f64 / n as f64);
                let mut acc = Complex64::default();
                for &(b, k) in &support {
                    let ph = Complex64::from_polar(1.0, k.0 * x.0 + k.1 * x.1);
                    acc += order_zero(x, k) * fhat[b] * ph;
                }
                *out = acc / (n * n) as f64;
            }
            row
        });
        let exact: Vec<Complex64> = rows.concat();
        let err = exact.iter().zip(&approx).map(|(e, a)| (e - a).norm_sqr()).sum::<f64>().sqrt();
        Ok(err / f.norm())
    }

    fn coarse_radius(&self) -> f64 {
        self.wedges.iter().find(|w| w.is_coarse()).map(|w| w.mean_radius).unwrap_or(0.0)
    }
}

fn build_wedge(
    scale: usize,
    angle: usize,
    half: i64,
    value: &impl Fn(i64, i64) -> f64,
    planner: &mut FftPlanner<f64>,
) -> Wedge {
    let (mut lo, mut hi) = ((i64::MAX, i64::MAX), (i64::MIN, i64::MIN));
    for k2 in -half..=half {
        for k1 in -half..=half {
            if value(k1, k2) > 0.0 {
                lo = (lo.0.min(k1), lo.1.min(k2));
                hi = (hi.0.max(k1), hi.1.max(k2));
            }
        }
    }
    let len = ((hi.0 - lo.0 + 1) as usize, (hi.1 - lo.1 + 1) as usize);
    let mut window = vec![0.0; len.0 * len.1];
    let (mut e, mut er, mut lifted) = (0.0, 0.0, 0.0);
    for d2 in 0..len.1 {
        for d1 in 0..len.0 {
            let (k1, k2) = (lo.0 + d1 as i64, lo.1 + d2 as i64);
            let u = value(k1, k2);
            window[d2 * len.0 + d1] = u;
            e += u * u;
            er += u * u * (k1 as f64).hypot(k2 as f64);
            let w = |k: i64| if k.abs() == half { 0.5 } else { 1.0 };
            lifted += u * u * w(k1) * w(k2);
        }
    }
    let radius = 2.0 * PI * er / e;
    let k_center = if scale == 0 {
        (0.0, 0.0)
    } else {
        // exact direction of the angular window center
        let count = COARSE_ANGLES << (scale / 2);
        let th = 2.0 * PI * angle as f64 / count as f64;
        (radius * th.cos(), radius * th.sin())
    };
    Wedge {
        scale,
        angle,
        lo,
        len,
        window,
        conj: 0,
        offset: 0,
        atom_norm: (lifted / (len.0 * len.1) as f64).sqrt(),
        k_center,
        mean_radius: radius,
        fft: Fft2::with_planner(planner, len.1, len.0),
    }
}

fn mirror(w: &Wedge, angle: usize, planner: &mut FftPlanner<f64>) -> Wedge {
    let (l1, l2) = w.len;
    let lo = (-(w.lo.0 + l1 as i64 - 1), -(w.lo.1 + l2 as i64 - 1));
    let mut window = vec![0.0; l1 * l2];
    for d2 in 0..l2 {
        for d1 in 0..l1 {
            window[d2 * l1 + d1] = w.window[(l2 - 1 - d2) * l1 + (l1 - 1 - d1)];
        }
    }
    Wedge {
        scale: w.scale,
        angle,
        lo,
        len: w.len,
        window,
        conj: 0,
        offset: 0,
        atom_norm: w.atom_norm,
        k_center: (-w.k_center.0, -w.k_center.1),
        mean_radius: w.mean_radius,
        fft: Fft2::with_planner(planner, l2, l1),
    }
}

/// Flat coefficient array for one plan.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveletCoeffs {
    n: usize,
    pub data: Vec<Complex64>,
}

impl CurveletCoeffs {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Energy of the coefficients of one wedge.
    pub fn wedge_energy(&self, w: &Wedge) -> f64 {
        self.data[w.offset..w.offset + w.count()].iter().map(|v| v.norm_sqr()).sum()
    }

    /// Debug dump: magic, plan descriptor line, then `(re, im)` pairs.
    pub fn write_debug(&self, plan: &CurveletPlan, path: impl AsRef<Path>) -> Result<()> {
        let mut out = b"PKCURV1\n".to_vec();
        writeln!(out, "{}", plan.descriptor())?;
        for v in &self.data {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
        fs::write(path, out)?;
        Ok(())
    }
}
