use super::{Medium, Node, SpectralLaplacian};
use crate::error::{Error, Result};
use crate::grid::ModelGrid;

const BLOWUP: f64 = 1e12;
const CHECK_EVERY: usize = 8;

/// Time stepper for `u_tt + sigma u_t = c^2 (Lap u + f)` on the padded grid,
/// with its exact discrete transpose.
///
/// Forward recurrence, `u^{-1} = u^0 = 0`:
/// `u^{k+1} = D+^{-1} [2 u^k - D- u^{k-1} + dt^2 C (L u^k + f^k)]`,
/// `D± = 1 ± sigma dt / 2`, `C = c^2`.
#[derive(Clone)]
pub struct WaveSolver {
    n: usize,
    w: usize,
    np: usize,
    dt: f64,
    lap: SpectralLaplacian,
    inv_dp: Vec<f64>,
    dm: Vec<f64>,
    dt2c: Vec<f64>,
}

impl WaveSolver {
    pub fn new(medium: &Medium, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || dt > medium.max_dt() * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "time step {dt:e} violates the stability bound {:e}",
                medium.max_dt()
            )));
        }
        let sigma = medium.padded_damping();
        let c2 = medium.padded_speed_sq();
        Ok(WaveSolver {
            n: medium.n(),
            w: medium.pml_width(),
            np: medium.padded_n(),
            dt,
            lap: SpectralLaplacian::new(medium.padded_n(), medium.h()),
            inv_dp: sigma.iter().map(|s| 1.0 / (1.0 + 0.5 * s * dt)).collect(),
            dm: sigma.iter().map(|s| 1.0 - 0.5 * s * dt).collect(),
            dt2c: c2.iter().map(|c| dt * dt * c).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn padded_n(&self) -> usize {
        self.np
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Padded linear index of physical node `(ix, iz)`.
    #[inline]
    pub fn padded_index(&self, (ix, iz): Node) -> usize {
        (iz + self.w) * self.np + ix + self.w
    }

    /// Adds `a * src` (physical `n x n`) into the padded buffer `dst`.
    pub fn add_physical(&self, dst: &mut [f64], a: f64, src: &[f64]) {
        let (n, np, w) = (self.n, self.np, self.w);
        for iz in 0..n {
            let d = &mut dst[(iz + w) * np + w..(iz + w) * np + w + n];
            for (d, s) in d.iter_mut().zip(&src[iz * n..(iz + 1) * n]) {
                *d += a * s;
            }
        }
    }

    /// Copies the physical part of a padded buffer into `dst`.
    pub fn extract_physical(&self, src: &[f64], dst: &mut [f64]) {
        let (n, np, w) = (self.n, self.np, self.w);
        for iz in 0..n {
            dst[iz * n..(iz + 1) * n].copy_from_slice(&src[(iz + w) * np + w..(iz + w) * np + w + n]);
        }
    }

    /// Runs `nt` steps. `forcing(k, buf)` adds `f^k` into `buf`;
    /// `observe(k, u)` sees every state `u^k`, `k = 0..nt`, starting with `u^0 = 0`.
    /// `scale` bounds `|f|` and sets the blow-up threshold.
    pub fn forward(
        &self,
        nt: usize,
        scale: f64,
        mut forcing: impl FnMut(usize, &mut [f64]),
        mut observe: impl FnMut(usize, &[f64]),
    ) -> Result<()> {
        let len = self.np * self.np;
        let mut prev = vec![0.0; len];
        let mut cur = vec![0.0; len];
        let mut next = vec![0.0; len];
        let mut buf = vec![0.0; len];
        let mut scratch = self.lap.scratch();
        for k in 0..nt {
            observe(k, &cur);
            if k + 1 == nt {
                break;
            }
            self.lap.apply(&cur, &mut buf, &mut scratch);
            forcing(k, &mut buf);
            for (((((nx, &c), &p), &b), &ip), (&dm, &q)) in next
                .iter_mut()
                .zip(&cur)
                .zip(&prev)
                .zip(&buf)
                .zip(&self.inv_dp)
                .zip(self.dm.iter().zip(&self.dt2c))
            {
                *nx = ip * (2.0 * c - dm * p + q * b);
            }
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
            if (k + 1) % CHECK_EVERY == 0 {
                check(&cur, k + 1, scale)?;
            }
        }
        check(&cur, nt, scale)
    }

    /// Transpose of [`WaveSolver::forward`] viewed as the map from forcing
    /// `f^0..f^{nt-2}` to states `u^1..u^{nt-1}`.
    ///
    /// `inject(j, buf)` adds the state-space residual `r^j` (`j = nt-1` down
    /// to 1); `gather(k, g)` receives the forcing-space adjoint `g^k`,
    /// `k = nt-2` down to 0.
    pub fn adjoint(
        &self,
        nt: usize,
        scale: f64,
        mut inject: impl FnMut(usize, &mut [f64]),
        mut gather: impl FnMut(usize, &[f64]),
    ) -> Result<()> {
        if nt < 2 {
            return Ok(());
        }
        let len = self.np * self.np;
        // mu^{j+2}, mu^{j+1}, and g = dt^2 C mu^{j+1}
        let mut mu2 = vec![0.0; len];
        let mut mu1 = vec![0.0; len];
        let mut g = vec![0.0; len];
        let mut buf = vec![0.0; len];
        let mut scratch = self.lap.scratch();
        for j in (1..nt).rev() {
            self.lap.apply(&g, &mut buf, &mut scratch);
            for ((b, &m1), (&m2, &dm)) in buf.iter_mut().zip(&mu1).zip(mu2.iter().zip(&self.dm)) {
                *b += 2.0 * m1 - dm * m2;
            }
            inject(j, &mut buf);
            // mu2 <- mu^j, then rotate so mu1 = mu^j
            for (((m, g), &b), (&ip, &q)) in
                mu2.iter_mut().zip(g.iter_mut()).zip(&buf).zip(self.inv_dp.iter().zip(&self.dt2c))
            {
                *m = ip * b;
                *g = q * *m;
            }
            std::mem::swap(&mut mu1, &mut mu2);
            gather(j - 1, &g);
            if j % CHECK_EVERY == 0 {
                check(&mu1, j, scale)?;
            }
        }
        check(&mu1, 0, scale)
    }
}

fn check(u: &[f64], step: usize, scale: f64) -> Result<()> {
    let max = u.iter().fold(0.0f64, |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v.abs()) });
    if !max.is_finite() || max > BLOWUP * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Instability { step, max });
    }
    Ok(())
}

/// Full wavefield history on the physical grid.
#[derive(Clone, Debug)]
pub struct Movie {
    pub n: usize,
    pub nt: usize,
    pub dt: f64,
    frames: Vec<f64>,
}

impl Movie {
    pub fn frame(&self, k: usize) -> &[f64] {
        let m = self.n * self.n;
        &self.frames[k * m..(k + 1) * m]
    }

    pub fn snapshot(&self, k: usize) -> ModelGrid {
        ModelGrid::new(self.n, self.frame(k).to_vec()).expect("finite frame")
    }
}

/// Solves with physical-grid forcing `rhs(k, f)` (which fills the zeroed
/// `n x n` buffer `f`) and returns every state `u^0..u^{nt-1}`.
pub fn solve_second_order(
    medium: &Medium,
    nt: usize,
    dt: f64,
    mut rhs: impl FnMut(usize, &mut [f64]),
) -> Result<Movie> {
    let solver = WaveSolver::new(medium, dt)?;
    let n = medium.n();
    let mut frames = vec![0.0; nt * n * n];
    let mut f = vec![0.0; n * n];
    let mut scale = 0.0f64;
    // the blow-up scale needs max |f|, so sample the forcing once up front
    let mut all = Vec::with_capacity(nt);
    for k in 0..nt {
        f.fill(0.0);
        rhs(k, &mut f);
        scale = f.iter().fold(scale, |m, v| m.max(v.abs()));
        all.push(f.clone());
    }
    solver.forward(
        nt,
        scale,
        |k, buf| solver.add_physical(buf, 1.0, &all[k]),
        |k, u| solver.extract_physical(u, &mut frames[k * n * n..(k + 1) * n * n]),
    )?;
    Ok(Movie { n, nt, dt, frames })
}

/// `trace[j][k] = u(r_j, t_k)`.
pub fn record(movie: &Movie, receivers: &[Node]) -> Result<Vec<Vec<f64>>> {
    let n = movie.n;
    if let Some(r) = receivers.iter().find(|&&(x, z)| x >= n || z >= n) {
        return Err(Error::invalid(format!("receiver {r:?} outside the physical grid")));
    }
    Ok(receivers
        .iter()
        .map(|&(x, z)| (0..movie.nt).map(|k| movie.frame(k)[z * n + x]).collect())
        .collect())
}
