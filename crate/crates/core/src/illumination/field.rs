//! Smooth speed fields for ray tracing.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::ModelGrid;
use crate::wavesim::hex;

/// Speed `c(x, z)` on the unit square with its gradient.
#[derive(Clone, Debug)]
pub enum SpeedField {
    Constant(f64),
    /// `c = a + b z`.
    LinearZ { a: f64, b: f64 },
    Grid(SplineField),
}

impl SpeedField {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("speed must be positive, got {c}")));
        }
        Ok(SpeedField::Constant(c))
    }

    pub fn linear_z(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a + b > 0.0) {
            return Err(Error::invalid(format!("c = {a} + {b} z is not positive on [0, 1]")));
        }
        Ok(SpeedField::LinearZ { a, b })
    }

    /// Interpolating cubic B-spline through the grid nodes.
    pub fn from_grid(g: &ModelGrid) -> Result<Self> {
        if g.min() <= 0.0 {
            return Err(Error::invalid("speed grid must be positive"));
        }
        Ok(SpeedField::Grid(SplineField::new(g)))
    }

    /// `(c, dc/dx, dc/dz)` at `p`.
    #[inline]
    pub fn eval(&self, p: (f64, f64)) -> (f64, f64, f64) {
        match self {
            SpeedField::Constant(c) => (*c, 0.0, 0.0),
            SpeedField::LinearZ { a, b } => (a + b * p.1, 0.0, *b),
            SpeedField::Grid(s) => s.eval(p),
        }
    }

    pub fn c_min(&self) -> f64 {
        match self {
            SpeedField::Constant(c) => *c,
            SpeedField::LinearZ { a, b } => a.min(a + b),
            SpeedField::Grid(s) => s.c_min,
        }
    }

    pub fn c_max(&self) -> f64 {
        match self {
            SpeedField::Constant(c) => *c,
            SpeedField::LinearZ { a, b } => a.max(a + b),
            SpeedField::Grid(s) => s.c_max,
        }
    }

    pub fn hash_hex(&self) -> String {
        let mut h = Sha256::new();
        match self {
            SpeedField::Constant(c) => {
                h.update(b"const");
                h.update(c.to_le_bytes());
            }
            SpeedField::LinearZ { a, b } => {
                h.update(b"linz");
                h.update(a.to_le_bytes());
                h.update(b.to_le_bytes());
            }
            SpeedField::Grid(s) => {
                h.update(b"grid");
                h.update((s.n as u64).to_le_bytes());
                for v in &s.coef {
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex(&h.finalize()[..16])
    }
}

/// Cubic B-spline coefficients on the node lattice `x = i h`, mirror boundary.
#[derive(Clone, Debug)]
pub struct SplineField {
    n: usize,
    h: f64,
    coef: Vec<f64>,
    c_min: f64,
    c_max: f64,
}

const POLE: f64 = -0.267_949_192_431_122_7; // sqrt(3) - 2

fn prefilter(c: &mut [f64]) {
    let n = c.len();
    let z = POLE;
    for v in c.iter_mut() {
        *v *= 6.0;
    }
    let horizon = n.min(40);
    let (mut zk, mut sum) = (z, c[0]);
    for v in &c[1..horizon] {
        sum += zk * v;
        zk *= z;
    }
    c[0] = sum;
    for k in 1..n {
        c[k] += z * c[k - 1];
    }
    c[n - 1] = z / (z * z - 1.0) * (c[n - 1] + z * c[n - 2]);
    for k in (0..n - 1).rev() {
        c[k] = z * (c[k + 1] - c[k]);
    }
}

impl SplineField {
    fn new(g: &ModelGrid) -> Self {
        let n = g.n();
        let mut coef = g.data().to_vec();
        for row in coef.chunks_mut(n) {
            prefilter(row);
        }
        let mut col = vec![0.0; n];
        for ix in 0..n {
            for iz in 0..n {
                col[iz] = coef[iz * n + ix];
            }
            prefilter(&mut col);
            for iz in 0..n {
                coef[iz * n + ix] = col[iz];
            }
        }
        // between nodes a cubic can overshoot slightly; the node range is the
        // bound used for step sizes, so widen it a little
        let pad = 0.05 * (g.max() - g.min());
        SplineField { n, h: g.h(), coef, c_min: (g.min() - pad).max(0.5 * g.min()), c_max: g.max() + pad }
    }

    /// Even reflection about the edge nodes, periodic with period `2(n-1)`.
    #[inline]
    fn mirror(&self, i: i64) -> usize {
        let period = 2 * (self.n as i64 - 1);
        let i = i.rem_euclid(period);
        (if i >= self.n as i64 { period - i } else { i }) as usize
    }

    fn eval(&self, p: (f64, f64)) -> (f64, f64, f64) {
        let axis = |x: f64| -> (i64, [f64; 4], [f64; 4]) {
            let u = x / self.h;
            let i = u.floor() as i64;
            let f = u - i as f64;
            let g = 1.0 - f;
            let w = [g * g * g / 6.0, (3.0 * f * f * f - 6.0 * f * f + 4.0) / 6.0, (-3.0 * f * f * f + 3.0 * f * f + 3.0 * f + 1.0) / 6.0, f * f * f / 6.0];
            let d = [-0.5 * g * g, (3.0 * f * f - 4.0 * f) / 2.0, (-3.0 * f * f + 2.0 * f + 1.0) / 2.0, 0.5 * f * f];
            (i, w, d)
        };
        let (ix, wx, dx) = axis(p.0);
        let (iz, wz, dz) = axis(p.1);
        let (mut c, mut cx, mut cz) = (0.0, 0.0, 0.0);
        for (a, (&wza, &dza)) in wz.iter().zip(&dz).enumerate() {
            let row = self.mirror(iz - 1 + a as i64) * self.n;
            let (mut s, mut sd) = (0.0, 0.0);
            for (b, (&wxb, &dxb)) in wx.iter().zip(&dx).enumerate() {
                let v = self.coef[row + self.mirror(ix - 1 + b as i64)];
                s += wxb * v;
                sd += dxb * v;
            }
            c += wza * s;
            cx += wza * sd;
            cz += dza * s;
        }
        (c, cx / self.h, cz / self.h)
    }
}
