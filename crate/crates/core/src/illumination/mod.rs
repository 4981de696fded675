//! Ray-traced illumination: which curvelets can be seen by the survey.
//!
//! An atom is visible when a pair of rays leaving its center at mirror
//! angles about its wavevector reaches a source and a receiver. Rays follow
//! the Hamiltonian `H = c(x) |p|` with fixed-step RK4.

mod field;

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::curvelet::CurveletPlan;
use crate::error::{Error, Result};
use crate::grid::io::split_line;
use crate::par;
use crate::wavesim::{hex, Acquisition};

pub use field::{SpeedField, SplineField};

/// Point on a ray: position, slowness vector, traveltime.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayState {
    pub x: (f64, f64),
    pub p: (f64, f64),
    pub t: f64,
}

impl RayState {
    /// `c(x) |p|`, identically 1 on an exact trajectory.
    pub fn hamiltonian(&self, field: &SpeedField) -> f64 {
        field.eval(self.x).0 * self.p.0.hypot(self.p.1)
    }
}

#[derive(Clone, Debug)]
pub struct Ray {
    pub states: Vec<RayState>,
    /// True when tracing stopped because the ray left the domain.
    pub exited: bool,
}

/// Fixed-step RK4 integrator on a square domain `[lo, hi]^2`.
#[derive(Clone, Debug)]
pub struct RayTracer<'a> {
    field: &'a SpeedField,
    dt: f64,
    lo: f64,
    hi: f64,
}

const MAX_STEPS: f64 = 1e8;

impl<'a> RayTracer<'a> {
    pub fn new(field: &'a SpeedField, dt: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || dt < 1e-12 * (hi - lo) / field.c_max() {
            return Err(Error::invalid(format!("ray step {dt:e} underflows")));
        }
        if !(hi > lo) {
            return Err(Error::invalid("empty tracing domain"));
        }
        Ok(RayTracer { field, dt, lo, hi })
    }

    /// Step `0.25 h / c_max` on the unit square widened by `margin`.
    pub fn for_grid(field: &'a SpeedField, h: f64, margin: f64) -> Result<Self> {
        Self::new(field, 0.25 * h / field.c_max(), -margin, 1.0 + margin)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn inside(&self, x: (f64, f64)) -> bool {
        x.0 >= self.lo && x.0 <= self.hi && x.1 >= self.lo && x.1 <= self.hi
    }

    #[inline]
    fn rhs(&self, s: [f64; 4]) -> [f64; 4] {
        let (c, gx, gz) = self.field.eval((s[0], s[1]));
        let pn = (s[2] * s[2] + s[3] * s[3]).sqrt();
        [c * s[2] / pn, c * s[3] / pn, -pn * gx, -pn * gz]
    }

    fn step(&self, s: [f64; 4]) -> [f64; 4] {
        let dt = self.dt;
        let add = |a: [f64; 4], b: [f64; 4], w: f64| [a[0] + w * b[0], a[1] + w * b[1], a[2] + w * b[2], a[3] + w * b[3]];
        let k1 = self.rhs(s);
        let k2 = self.rhs(add(s, k1, 0.5 * dt));
        let k3 = self.rhs(add(s, k2, 0.5 * dt));
        let k4 = self.rhs(add(s, k3, dt));
        let mut out = s;
        for i in 0..4 {
            out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// Integrates from `x0` along `dir`, calling `visit(prev, next)` for each
    /// step until it returns true, `t_max` is reached or the ray leaves the
    /// domain. Returns whether the ray exited.
    pub fn march(
        &self,
        x0: (f64, f64),
        dir: (f64, f64),
        t_max: f64,
        mut visit: impl FnMut(&RayState, &RayState) -> bool,
    ) -> Result<bool> {
        if !self.inside(x0) {
            return Err(Error::invalid(format!("ray start {x0:?} outside the domain")));
        }
        let norm = dir.0.hypot(dir.1);
        if !(norm > 0.0) {
            return Err(Error::invalid("zero ray direction"));
        }
        if t_max / self.dt > MAX_STEPS {
            return Err(Error::invalid(format!("ray step {:e} underflows for t_max {t_max:e}", self.dt)));
        }
        let c0 = self.field.eval(x0).0;
        let mut s = [x0.0, x0.1, dir.0 / (norm * c0), dir.1 / (norm * c0)];
        let mut prev = RayState { x: x0, p: (s[2], s[3]), t: 0.0 };
        let steps = (t_max / self.dt).round() as usize;
        for k in 1..=steps {
            s = self.step(s);
            let next = RayState { x: (s[0], s[1]), p: (s[2], s[3]), t: k as f64 * self.dt };
            if visit(&prev, &next) {
                return Ok(false);
            }
            if !self.inside(next.x) {
                return Ok(true);
            }
            prev = next;
        }
        Ok(false)
    }

    /// Sampled trajectory; the last state is outside the domain when `exited`.
    pub fn trace_ray(&self, x0: (f64, f64), dir: (f64, f64), t_max: f64) -> Result<Ray> {
        let mut states = Vec::new();
        let exited = self.march(x0, dir, t_max, |a, b| {
            if states.is_empty() {
                states.push(*a);
            }
            states.push(*b);
            false
        })?;
        if states.is_empty() {
            let c0 = self.field.eval(x0).0;
            let n = dir.0.hypot(dir.1) * c0;
            states.push(RayState { x: x0, p: (dir.0 / n, dir.1 / n), t: 0.0 });
        }
        Ok(Ray { states, exited })
    }
}

/// Source and receiver positions on the unit square.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub sources: Vec<(f64, f64)>,
    pub receivers: Vec<(f64, f64)>,
}

impl Geometry {
    pub fn from_acquisition(acq: &Acquisition, n: usize) -> Self {
        let h = 1.0 / n as f64;
        let pos = |v: &[(usize, usize)]| v.iter().map(|&(x, z)| (x as f64 * h, z as f64 * h)).collect();
        Geometry { sources: pos(&acq.sources), receivers: pos(&acq.receivers) }
    }

    /// Sources and receivers on every boundary node of all four sides.
    pub fn full_aperture(n: usize) -> Self {
        let h = 1.0 / n as f64;
        let top = (n - 1) as f64 * h;
        let mut pts = Vec::new();
        for i in 0..n {
            let s = i as f64 * h;
            pts.extend([(s, 0.0), (s, top), (0.0, s), (top, s)]);
        }
        Geometry { sources: pts.clone(), receivers: pts }
    }

    pub fn descriptor(&self) -> String {
        format!("src={:?};rcv={:?}", self.sources, self.receivers)
    }
}

/// Bucketed point set answering "is any point within `tol` of a segment".
struct PointSet {
    cell: f64,
    lo: f64,
    dim: usize,
    buckets: Vec<Vec<(f64, f64)>>,
    /// Cells with a non-empty bucket within two cells.
    occupied: Vec<bool>,
    tol: f64,
}

impl PointSet {
    fn new(points: &[(f64, f64)], tol: f64, lo: f64, hi: f64) -> Self {
        let cell = tol.max(1e-3);
        let dim = ((hi - lo) / cell).ceil() as usize + 1;
        let mut buckets = vec![Vec::new(); dim * dim];
        for &p in points {
            let (i, j) = (((p.0 - lo) / cell) as usize, ((p.1 - lo) / cell) as usize);
            if i < dim && j < dim {
                buckets[j * dim + i].push(p);
            }
        }
        let mut occupied = vec![false; dim * dim];
        for j in 0..dim {
            for i in 0..dim {
                if !buckets[j * dim + i].is_empty() {
                    for jj in j.saturating_sub(2)..(j + 3).min(dim) {
                        for ii in i.saturating_sub(2)..(i + 3).min(dim) {
                            occupied[jj * dim + ii] = true;
                        }
                    }
                }
            }
        }
        PointSet { cell, lo, dim, buckets, occupied, tol }
    }

    fn near(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        let cellf = |v: f64| (((v - self.lo) / self.cell).floor().max(0.0) as usize).min(self.dim - 1);
        // a segment shorter than a cell stays next to its first cell, and
        // anything within one cell of it is at most two cells away
        if self.tol >= self.cell
            && (a.0 - b.0).abs() <= self.cell
            && (a.1 - b.1).abs() <= self.cell
            && !self.occupied[cellf(a.1) * self.dim + cellf(a.0)]
            && !self.occupied[cellf(b.1) * self.dim + cellf(b.0)]
        {
            return false;
        }
        let (i0, i1) = (cellf(a.0.min(b.0) - self.tol), cellf(a.0.max(b.0) + self.tol));
        let (j0, j1) = (cellf(a.1.min(b.1) - self.tol), cellf(a.1.max(b.1) + self.tol));
        let tol2 = self.tol * self.tol;
        for j in j0..=j1 {
            for i in i0..=i1 {
                if self.buckets[j * self.dim + i].iter().any(|&p| segment_dist2(p, a, b) <= tol2) {
                    return true;
                }
            }
        }
        false
    }
}

/// Squared distance from `p` to the segment `[a, b]`.
pub fn segment_dist2(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dz) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dz * dz;
    let t = if len2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dz) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (qx, qz) = (a.0 + t * dx - p.0, a.1 + t * dz - p.1);
    qx * qx + qz * qz
}

/// Sweep and tolerance settings of the visibility test.
#[derive(Clone, Debug, PartialEq)]
pub struct VisibilityConfig {
    /// Number of half-angles, spread uniformly over `(0, 90)` degrees.
    pub sweep: usize,
    pub tol_src: f64,
    pub tol_rcv: f64,
    pub t_max: f64,
    pub h: f64,
}

impl VisibilityConfig {
    /// 180 half-angles, tolerances of two coarse-lattice steps and
    /// `t_max = 3 diag / c_min`.
    pub fn new(plan: &CurveletPlan, field: &SpeedField) -> Self {
        let coarse = &plan.wedges()[0];
        let step = coarse.lattice_step().0.max(coarse.lattice_step().1);
        VisibilityConfig {
            sweep: 180,
            tol_src: 2.0 * step,
            tol_rcv: 2.0 * step,
            t_max: 3.0 * 2f64.sqrt() / field.c_min(),
            h: 1.0 / plan.n() as f64,
        }
    }

    pub fn half_angles(&self) -> Vec<f64> {
        (0..self.sweep).map(|j| (j as f64 + 0.5) * 0.5 * std::f64::consts::PI / self.sweep as f64).collect()
    }

    pub fn margin(&self) -> f64 {
        self.tol_src.max(self.tol_rcv)
    }

    pub fn descriptor(&self) -> String {
        format!("sweep={};tol_src={:e};tol_rcv={:e};t_max={:e};h={:e}", self.sweep, self.tol_src, self.tol_rcv, self.t_max, self.h)
    }
}

/// Visibility test bound to one medium and survey.
pub struct Illuminator<'a> {
    tracer: RayTracer<'a>,
    sources: PointSet,
    receivers: PointSet,
    alphas: Vec<(f64, f64)>,
    t_max: f64,
}

impl<'a> Illuminator<'a> {
    pub fn new(field: &'a SpeedField, geometry: &Geometry, cfg: &VisibilityConfig) -> Result<Self> {
        if geometry.sources.is_empty() || geometry.receivers.is_empty() {
            return Err(Error::invalid("geometry needs sources and receivers"));
        }
        let m = cfg.margin();
        let tracer = RayTracer::for_grid(field, cfg.h, m)?;
        Ok(Illuminator {
            sources: PointSet::new(&geometry.sources, cfg.tol_src, -m, 1.0 + m),
            receivers: PointSet::new(&geometry.receivers, cfg.tol_rcv, -m, 1.0 + m),
            alphas: cfg.half_angles().iter().map(|a| (a.cos(), a.sin())).collect(),
            tracer,
            t_max: cfg.t_max,
        })
    }

    /// `(hits a source, hits a receiver)`; stops early once `want` is met.
    fn hits(&self, x: (f64, f64), d: (f64, f64), want: (bool, bool)) -> (bool, bool) {
        let (mut s, mut r) = (false, false);
        let done = self.tracer.march(x, d, self.t_max, |a, b| {
            s = s || self.sources.near(a.x, b.x);
            r = r || self.receivers.near(a.x, b.x);
            (s || !want.0) && (r || !want.1)
        });
        match done {
            Ok(_) => (s, r),
            Err(_) => (false, false),
        }
    }

    /// Whether a specular source/receiver ray pair leaves `x` about the
    /// normal direction `k`. A zero `k` counts as visible.
    pub fn visible(&self, x: (f64, f64), k: (f64, f64)) -> bool {
        let norm = k.0.hypot(k.1);
        if norm == 0.0 {
            return true;
        }
        for sign in [1.0, -1.0] {
            let o = (sign * k.0 / norm, sign * k.1 / norm);
            for &(ca, sa) in &self.alphas {
                let plus = (o.0 * ca - o.1 * sa, o.0 * sa + o.1 * ca);
                let minus = (o.0 * ca + o.1 * sa, -o.0 * sa + o.1 * ca);
                let (s1, r1) = self.hits(x, plus, (true, true));
                if !s1 && !r1 {
                    continue;
                }
                let (s2, r2) = self.hits(x, minus, (r1, s1));
                if (s1 && r2) || (r1 && s2) {
                    return true;
                }
            }
        }
        false
    }
}

/// One bit per atom; 1 = illuminated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IlluminationMask {
    descriptor: String,
    len: usize,
    bits: Vec<u64>,
}

const MASK_MAGIC: &[u8] = b"PKMASK1\n";

impl IlluminationMask {
    pub fn new(plan: &CurveletPlan, value: bool) -> Self {
        let len = plan.len();
        let mut m = IlluminationMask { descriptor: plan.descriptor(), len, bits: vec![0; len.div_ceil(64)] };
        if value {
            for i in 0..len {
                m.set(i, true);
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        if v {
            self.bits[i / 64] |= 1 << (i % 64);
        } else {
            self.bits[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn hamming(&self, other: &Self) -> usize {
        self.bits.iter().zip(&other.bits).map(|(a, b)| (a ^ b).count_ones() as usize).sum()
    }

    pub fn matches(&self, plan: &CurveletPlan) -> bool {
        self.descriptor == plan.descriptor() && self.len == plan.len()
    }

    /// Zeroes the coefficients of invisible atoms.
    pub fn apply(&self, c: &mut crate::curvelet::CurveletCoeffs) -> Result<()> {
        if c.data.len() != self.len {
            return Err(Error::SizeMismatch(format!("{} coefficients vs mask of {}", c.data.len(), self.len)));
        }
        for (i, v) in c.data.iter_mut().enumerate() {
            if !self.get(i) {
                *v = Default::default();
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MASK_MAGIC.to_vec();
        out.extend_from_slice(self.descriptor.as_bytes());
        out.push(b'\n');
        let _ = writeln!(out, "len={}", self.len);
        let bytes = self.len.div_ceil(8);
        out.extend(self.bits.iter().flat_map(|w| w.to_le_bytes()).take(bytes));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |r: &str| Error::format("PKMASK1", r);
        let rest = bytes.strip_prefix(MASK_MAGIC).ok_or_else(|| bad("bad magic"))?;
        let (descriptor, rest) = split_line(rest).ok_or_else(|| bad("missing descriptor"))?;
        let (len_line, payload) = split_line(rest).ok_or_else(|| bad("missing length"))?;
        let len: usize = len_line
            .strip_prefix("len=")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad length line"))?;
        if payload.len() != len.div_ceil(8) {
            return Err(bad(&format!("expected {} payload bytes, found {}", len.div_ceil(8), payload.len())));
        }
        let mut bits = vec![0u64; len.div_ceil(64)];
        for (i, &b) in payload.iter().enumerate() {
            bits[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        if len % 64 != 0 && bits.last().is_some_and(|w| w >> (len % 64) != 0) {
            return Err(bad("padding bits set"));
        }
        Ok(IlluminationMask { descriptor: descriptor.to_string(), len, bits })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Visibility of every atom. The coarse scale is always included; conjugate
/// atoms share a center up to the sign of `k`, so only one of each pair is traced.
pub fn build_mask(
    plan: &CurveletPlan,
    field: &SpeedField,
    geometry: &Geometry,
    cfg: &VisibilityConfig,
) -> Result<IlluminationMask> {
    let ill = Illuminator::new(field, geometry, cfg)?;
    let canon: Vec<usize> = (0..plan.len())
        .filter(|&id| {
            let a = plan.atom(id);
            a.wedge <= plan.atom(a.conj).wedge
        })
        .collect();
    let seen = par::map_slice(&canon, |&id| {
        let a = plan.atom(id);
        plan.wedges()[a.wedge].is_coarse() || ill.visible(a.x, a.k)
    });
    let mut mask = IlluminationMask::new(plan, false);
    for (&id, &v) in canon.iter().zip(&seen) {
        mask.set(id, v);
        mask.set(plan.atom(id).conj, v);
    }
    Ok(mask)
}

/// [`build_mask`] with an on-disk cache keyed by plan, medium, survey and
/// sweep settings. Unreadable cache entries are recomputed.
pub fn build_mask_cached(
    plan: &CurveletPlan,
    field: &SpeedField,
    geometry: &Geometry,
    cfg: &VisibilityConfig,
    cache: Option<&Path>,
) -> Result<IlluminationMask> {
    let Some(dir) = cache else {
        return build_mask(plan, field, geometry, cfg);
    };
    let mut h = Sha256::new();
    for part in [plan.descriptor(), field.hash_hex(), geometry.descriptor(), cfg.descriptor()] {
        h.update(part.as_bytes());
        h.update([0]);
    }
    let path = dir.join(format!("mask-{}.bin", hex(&h.finalize()[..16])));
    if let Ok(m) = IlluminationMask::read(&path) {
        if m.matches(plan) {
            return Ok(m);
        }
    }
    let mask = build_mask(plan, field, geometry, cfg)?;
    fs::create_dir_all(dir)?;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    mask.write(&tmp)?;
    fs::rename(&tmp, &path)?;
    Ok(mask)
}
