//! Born modeling, reverse-time migration as its exact transpose, and the
//! Gauss-Newton Hessian `H = F* F`.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::ModelGrid;
use crate::par;
use crate::wavesim::{hex, Acquisition, Medium, ShotData, WaveSolver};

/// Largest grid for which [`LinearizedProblem::dense_hessian`] runs without override.
pub const DENSE_LIMIT: usize = 48;

/// Background medium, survey, and cached second time derivatives of the
/// incident fields (one `(nt-1) x n^2` block per source).
pub struct LinearizedProblem {
    medium: Medium,
    acq: Acquisition,
    solver: WaveSolver,
    incident: Vec<Vec<f64>>,
    incident_max: Vec<f64>,
}

impl LinearizedProblem {
    pub fn new(medium: Medium, acq: Acquisition) -> Result<Self> {
        Self::with_cache(medium, acq, None)
    }

    /// Like [`LinearizedProblem::new`], reusing incident fields stored under
    /// `cache_dir` when they match the medium and survey.
    pub fn with_cache(medium: Medium, acq: Acquisition, cache_dir: Option<&Path>) -> Result<Self> {
        let solver = WaveSolver::new(&medium, acq.dt)?;
        let n = medium.n();
        let frames = (acq.nt - 1) * n * n;
        let incident = par::map_range(acq.sources.len(), |s| -> Result<Vec<f64>> {
            let path = cache_dir.map(|d| cache_path(d, &medium, &acq, s));
            if let Some(p) = &path {
                if let Ok(bytes) = fs::read(p) {
                    if bytes.len() == 8 * frames {
                        return Ok(crate::grid::io::le_f64s(&bytes));
                    }
                }
            }
            let a = incident_accel(&solver, &acq, s)?;
            if let Some(p) = &path {
                store(p, &a)?;
            }
            Ok(a)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let incident_max = incident.iter().map(|a| a.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
        Ok(LinearizedProblem { medium, acq, solver, incident, incident_max })
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    pub fn acquisition(&self) -> &Acquisition {
        &self.acq
    }

    pub fn n(&self) -> usize {
        self.medium.n()
    }

    pub fn empty_data(&self) -> ShotData {
        ShotData::zeros(self.acq.receivers.len(), self.acq.sources.len(), self.acq.nt, self.acq.dt)
    }

    /// Second time derivative of the incident field of source `s` at step `k`.
    pub fn incident_accel(&self, s: usize, k: usize) -> &[f64] {
        let m = self.n() * self.n();
        &self.incident[s][k * m..(k + 1) * m]
    }

    /// `F dm`: scattered field forced by `-dm (u0)_tt`, recorded at the receivers.
    pub fn born_forward(&self, dm: &ModelGrid) -> Result<ShotData> {
        self.check_model(dm)?;
        let mut out = self.empty_data();
        let shots = par::map_range(self.acq.sources.len(), |s| self.born_shot(s, dm));
        for (s, shot) in shots.into_iter().enumerate() {
            out.shot_mut(s).copy_from_slice(&shot?);
        }
        Ok(out)
    }

    /// `F* d`: receivers inject the residual into the transposed recurrence,
    /// whose output is correlated with `-(u0)_tt` and stacked over sources.
    pub fn migrate(&self, d: &ShotData) -> Result<ModelGrid> {
        self.check_data(d)?;
        let images = par::map_range(self.acq.sources.len(), |s| self.migrate_shot(s, d.shot(s)));
        self.stack(images)
    }

    /// `H v = F* F v`, one source at a time.
    pub fn hessian_apply(&self, v: &ModelGrid) -> Result<ModelGrid> {
        self.check_model(v)?;
        let images = par::map_range(self.acq.sources.len(), |s| {
            let shot = self.born_shot(s, v)?;
            self.migrate_shot(s, &shot)
        });
        self.stack(images)
    }

    /// Dense `n^2 x n^2` Hessian, column `j` being `H e_j`.
    pub fn dense_hessian(&self, allow_large: bool) -> Result<DMatrix<f64>> {
        let n = self.n();
        if n > DENSE_LIMIT && !allow_large {
            return Err(Error::invalid(format!(
                "dense Hessian at n={n} exceeds the n<={DENSE_LIMIT} guard; pass the override to proceed"
            )));
        }
        let m = n * n;
        let cols = par::map_range(m, |j| -> Result<Vec<f64>> {
            let mut e = ModelGrid::zeros(n);
            e.data_mut()[j] = 1.0;
            // sources run sequentially inside a column; columns carry the parallelism
            let mut acc = vec![0.0; m];
            for s in 0..self.acq.sources.len() {
                let shot = self.born_shot(s, &e)?;
                let img = self.migrate_shot(s, &shot)?;
                acc.iter_mut().zip(&img).for_each(|(a, b)| *a += b);
            }
            Ok(acc)
        });
        let mut h = DMatrix::zeros(m, m);
        for (j, col) in cols.into_iter().enumerate() {
            h.column_mut(j).copy_from_slice(&col?);
        }
        Ok(h)
    }

    fn born_shot(&self, s: usize, dm: &ModelGrid) -> Result<Vec<f64>> {
        let (nt, nr) = (self.acq.nt, self.acq.receivers.len());
        let m = self.n() * self.n();
        let a = &self.incident[s];
        let mut shot = vec![0.0; nr * nt];
        let mut f = vec![0.0; m];
        let rcv: Vec<usize> = self.acq.receivers.iter().map(|&r| self.solver.padded_index(r)).collect();
        let scale = dm.max_abs() * self.incident_max[s];
        self.solver.forward(
            nt,
            scale,
            |k, buf| {
                for ((f, a), d) in f.iter_mut().zip(&a[k * m..(k + 1) * m]).zip(dm.data()) {
                    *f = -d * a;
                }
                self.solver.add_physical(buf, 1.0, &f);
            },
            |k, u| {
                for (r, &p) in rcv.iter().enumerate() {
                    shot[r * nt + k] = u[p];
                }
            },
        )?;
        Ok(shot)
    }

    fn migrate_shot(&self, s: usize, shot: &[f64]) -> Result<Vec<f64>> {
        let nt = self.acq.nt;
        let n = self.n();
        let m = n * n;
        let a = &self.incident[s];
        let rcv: Vec<usize> = self.acq.receivers.iter().map(|&r| self.solver.padded_index(r)).collect();
        let scale = shot.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut image = vec![0.0; m];
        let mut g = vec![0.0; m];
        self.solver.adjoint(
            nt,
            scale,
            |j, buf| {
                for (r, &p) in rcv.iter().enumerate() {
                    buf[p] += shot[r * nt + j];
                }
            },
            |k, gk| {
                self.solver.extract_physical(gk, &mut g);
                for ((im, a), g) in image.iter_mut().zip(&a[k * m..(k + 1) * m]).zip(&g) {
                    *im -= a * g;
                }
            },
        )?;
        Ok(image)
    }

    fn stack(&self, images: Vec<Result<Vec<f64>>>) -> Result<ModelGrid> {
        let n = self.n();
        let mut acc = vec![0.0; n * n];
        for img in images {
            acc.iter_mut().zip(&img?).for_each(|(a, b)| *a += b);
        }
        ModelGrid::new(n, acc)
    }

    fn check_model(&self, g: &ModelGrid) -> Result<()> {
        if g.n() != self.n() {
            return Err(Error::SizeMismatch(format!("model n={} vs problem n={}", g.n(), self.n())));
        }
        Ok(())
    }

    fn check_data(&self, d: &ShotData) -> Result<()> {
        let (nr, ns, nt) = (self.acq.receivers.len(), self.acq.sources.len(), self.acq.nt);
        if (d.nr, d.ns, d.nt) != (nr, ns, nt) {
            return Err(Error::SizeMismatch(format!(
                "data dims {}x{}x{} vs survey {nr}x{ns}x{nt}",
                d.nr, d.ns, d.nt
            )));
        }
        Ok(())
    }
}

/// `(u0^{k+1} - 2 u0^k + u0^{k-1}) / dt^2` for `k = 0..nt-1`, physical grid.
fn incident_accel(solver: &WaveSolver, acq: &Acquisition, s: usize) -> Result<Vec<f64>> {
    let n = solver.n();
    let m = n * n;
    let nt = acq.nt;
    let h = 1.0 / n as f64;
    let src = solver.padded_index(acq.sources[s]);
    let amp = 1.0 / (h * h);
    let w = acq.wavelet();
    let inv_dt2 = 1.0 / (acq.dt * acq.dt);
    let mut out = vec![0.0; (nt - 1) * m];
    let mut u = vec![0.0; m];
    let mut u1 = vec![0.0; m];
    let mut u2 = vec![0.0; m];
    solver.forward(
        nt,
        amp,
        |k, buf| buf[src] += amp * w[k],
        |k, field| {
            solver.extract_physical(field, &mut u);
            if k >= 1 {
                let a = &mut out[(k - 1) * m..k * m];
                for i in 0..m {
                    a[i] = (u[i] - 2.0 * u1[i] + u2[i]) * inv_dt2;
                }
            }
            std::mem::swap(&mut u2, &mut u1);
            u1.copy_from_slice(&u);
        },
    )?;
    Ok(out)
}

fn cache_path(dir: &Path, medium: &Medium, acq: &Acquisition, s: usize) -> PathBuf {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(medium.hash_hex());
    h.update(acq.descriptor());
    h.update(s.to_le_bytes());
    dir.join(format!("incident-{}.bin", &hex(&h.finalize())[..32]))
}

fn store(path: &Path, a: &[f64]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut bytes = Vec::with_capacity(8 * a.len());
    for v in a {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}
