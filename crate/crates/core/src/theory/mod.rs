//! Monte-Carlo checks of the concentration argument behind probing: tail
//! bounds for Gaussian quadratic forms, concentration of the normal matrix
//! `M_ij = y^T H B_i^T B_j H y` around its mean, and the eigenvalue margin
//! that follows from it.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::ModelGrid;
use crate::par;
use crate::pdo::{BasisSpec, PdoBasis};

/// Seed of sample `t` drawn under `master`; distinct for distinct pairs.
pub fn sample_seed(master: u64, t: usize) -> u64 {
    let mut z = master ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().singular_values().max()
}

/// Outcome of [`quadratic_tail`].
#[derive(Clone, Debug)]
pub struct TailReport {
    pub lambda: f64,
    pub threshold: f64,
    pub trials: usize,
    pub exceedances: usize,
    /// `2 exp(-lambda)`, capped at 1.
    pub bound: f64,
    /// Binomial standard deviation of the frequency at probability `bound`.
    pub sigma: f64,
}

impl TailReport {
    pub fn frequency(&self) -> f64 {
        self.exceedances as f64 / self.trials as f64
    }

    /// Frequency within three binomial standard deviations of the bound.
    pub fn holds(&self) -> bool {
        self.frequency() <= self.bound + 3.0 * self.sigma
    }
}

/// Empirical probability that `|y^T A y - tr A|` reaches
/// `||A + A^T||_F sqrt(lambda) + 2 ||A|| lambda` for standard Gaussian `y`,
/// one report per entry of `lambdas` (the same samples serve all of them).
pub fn quadratic_tail(a: &DMatrix<f64>, lambdas: &[f64], trials: usize, seed: u64) -> Result<Vec<TailReport>> {
    if !a.is_square() {
        return Err(Error::SizeMismatch(format!("quadratic form needs a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    if trials < 10_000 {
        return Err(Error::invalid(format!("tail estimates need at least 10^4 trials, got {trials}")));
    }
    if lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::invalid("lambda must be positive"));
    }
    let n = a.nrows();
    let fro = (a + a.transpose()).norm();
    let spec = if n == 0 { 0.0 } else { spectral_norm(a) };
    let thresholds: Vec<f64> = lambdas.iter().map(|&l| fro * l.sqrt() + 2.0 * spec * l).collect();
    let trace = a.trace();
    let chunk = 1000;
    let counts = par::map_range(trials.div_ceil(chunk), |c| {
        let mut counts = vec![0usize; lambdas.len()];
        let mut ay = DVector::zeros(n);
        for t in c * chunk..((c + 1) * chunk).min(trials) {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, t));
            let y = DVector::from_vec(gaussian(&mut rng, n));
            ay.gemv(1.0, a, &y, 0.0);
            let dev = (y.dot(&ay) - trace).abs();
            for (k, &th) in thresholds.iter().enumerate() {
                // a zero form never deviates, so it never reaches a zero threshold either
                if dev > 0.0 && dev >= th {
                    counts[k] += 1;
                }
            }
        }
        counts
    });
    Ok(lambdas
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let bound = (2.0 * (-lambda).exp()).min(1.0);
            TailReport {
                lambda,
                threshold: thresholds[k],
                trials,
                exceedances: counts.iter().map(|c| c[k]).sum(),
                bound,
                sigma: (bound * (1.0 - bound) / trials as f64).sqrt(),
            }
        })
        .collect())
}

/// Deviations of a complex quadratic form and of its Hermitian and
/// anti-Hermitian parts `A1 = (A + A*)/2`, `A2 = i (A - A*)/2`, for one real
/// sample `y`. Returns `(|dev A|, |dev A1|, |dev A2|)`.
pub fn complex_split(a: &DMatrix<Complex64>, y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = a.nrows();
    if !a.is_square() || y.len() != n {
        return Err(Error::SizeMismatch(format!("complex form {}x{} vs sample {}", a.nrows(), a.ncols(), y.len())));
    }
    let adj = a.adjoint();
    let a1 = (a + &adj).scale(0.5);
    let a2 = (a - &adj) * Complex64::new(0.0, 0.5);
    let form = |m: &DMatrix<Complex64>| {
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..n {
            for i in 0..n {
                s += m[(i, j)] * (y[i] * y[j]);
            }
        }
        s - m.trace()
    };
    Ok((form(a).norm(), form(&a1).norm(), form(&a2).norm()))
}

/// Orthogonal `n x n` operator `W P D2 W D1` with `W` the normalized
/// Walsh-Hadamard transform, `D` random signs and `P` a random permutation.
#[derive(Clone, Debug)]
pub struct StructuredOrthogonal {
    d1: Vec<f64>,
    d2: Vec<f64>,
    perm: Vec<usize>,
}

impl StructuredOrthogonal {
    pub fn random(n: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if !n.is_power_of_two() {
            return Err(Error::invalid(format!("Walsh-Hadamard size must be a power of two, got {n}")));
        }
        let mut signs = || (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect::<Vec<_>>();
        let (d1, d2) = (signs(), signs());
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        Ok(StructuredOrthogonal { d1, d2, perm })
    }

    pub fn n(&self) -> usize {
        self.d1.len()
    }

    pub fn apply(&self, x: &mut [f64]) {
        x.iter_mut().zip(&self.d1).for_each(|(v, s)| *v *= s);
        fwht(x);
        let t: Vec<f64> = self.perm.iter().zip(&self.d2).map(|(&p, s)| x[p] * s).collect();
        x.copy_from_slice(&t);
        fwht(x);
    }

    pub fn apply_transpose(&self, x: &mut [f64]) {
        fwht(x);
        let mut t = vec![0.0; x.len()];
        for (i, (&p, s)) in self.perm.iter().zip(&self.d2).enumerate() {
            t[p] = x[i] * s;
        }
        x.copy_from_slice(&t);
        fwht(x);
        x.iter_mut().zip(&self.d1).for_each(|(v, s)| *v *= s);
    }
}

/// In-place orthonormal fast Walsh-Hadamard transform.
pub fn fwht(x: &mut [f64]) {
    let n = x.len();
    let mut h = 1;
    while h < n {
        for block in x.chunks_mut(2 * h) {
            let (a, b) = block.split_at_mut(h);
            for (u, v) in a.iter_mut().zip(b.iter_mut()) {
                let (s, d) = (*u + *v, *u - *v);
                *u = s;
                *v = d;
            }
        }
        h *= 2;
    }
    let s = 1.0 / (n as f64).sqrt();
    x.iter_mut().for_each(|v| *v *= s);
}

/// Nonzero eigenvalues of the synthetic `H`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Spectrum {
    Flat,
    /// Evenly spaced on `[1, top]`.
    Linear { top: f64 },
}

impl Spectrum {
    fn values(&self, r: usize) -> Vec<f64> {
        match *self {
            Spectrum::Flat => vec![1.0; r],
            Spectrum::Linear { top } => {
                (0..r).map(|k| if r == 1 { 1.0 } else { 1.0 + (top - 1.0) * k as f64 / (r - 1) as f64 }).collect()
            }
        }
    }
}

enum Ops {
    /// `H = U diag(s, 0) U^T`; `B_i` structured orthogonals, or `H^+` when empty.
    Structured { u: StructuredOrthogonal, s: Vec<f64>, ops: Vec<StructuredOrthogonal> },
    Dense { h: DMatrix<f64>, range: DMatrix<f64>, ops: Vec<DMatrix<f64>> },
}

/// Symmetric rank-`r` operator `H`, basis `B_1..B_p`, and the exact mean
/// `EM_ij = Tr(H B_i^T B_j H)` of the normal matrix.
pub struct SyntheticEnsemble {
    pub recipe: String,
    pub n: usize,
    pub r: usize,
    pub p: usize,
    /// Smallest `eta` with `||B_i H|| <= eta ||B_i H||_F / sqrt(r)` for all `i`.
    pub eta: f64,
    pub em: DMatrix<f64>,
    ops: Ops,
}

impl SyntheticEnsemble {
    /// Random structured orthogonal basis and `H = U diag(s) U^T` of rank `r`
    /// with `U` another structured orthogonal. `n` must be a power of two.
    pub fn structured(n: usize, r: usize, p: usize, spectrum: Spectrum, seed: u64) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("basis must be nonempty"));
        }
        let (u, s) = Self::structured_h(n, r, spectrum, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, usize::MAX));
        let ops = (0..p).map(|_| StructuredOrthogonal::random(n, &mut rng)).collect::<Result<Vec<_>>>()?;
        let fro = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let top = s.iter().fold(0.0f64, |m, &v| m.max(v));
        let mut e = Self {
            recipe: "structured".into(),
            n,
            r,
            p,
            eta: top * (r as f64).sqrt() / fro,
            em: DMatrix::zeros(p, p),
            ops: Ops::Structured { u, s, ops },
        };
        e.em = e.exact_mean();
        e.check_mean()?;
        Ok(e)
    }

    /// Single basis operator `B_1 = H^+`, so `M = ||P y||^2` is chi-square with `r` degrees.
    pub fn pseudo_inverse(n: usize, r: usize, spectrum: Spectrum, seed: u64) -> Result<Self> {
        let (u, s) = Self::structured_h(n, r, spectrum, seed)?;
        let e = Self {
            recipe: "pseudo-inverse".into(),
            n,
            r,
            p: 1,
            eta: 1.0,
            em: DMatrix::from_element(1, 1, r as f64),
            ops: Ops::Structured { u, s, ops: Vec::new() },
        };
        e.check_mean()?;
        Ok(e)
    }

    /// Real design operators of a pseudodifferential basis on a `grid_n`
    /// grid, with `H` a random rank-`r` operator of the given spectrum.
    pub fn pdo(grid_n: usize, r: usize, spec: BasisSpec, spectrum: Spectrum, seed: u64) -> Result<Self> {
        let basis = PdoBasis::new(spec, grid_n)?;
        let n = grid_n * grid_n;
        let p = basis.real_dim();
        let cols = par::map_range(n, |j| {
            let mut e = ModelGrid::zeros(grid_n);
            e.data_mut()[j] = 1.0;
            basis.real_columns(&e)
        });
        let mut ops = vec![DMatrix::zeros(n, n); p];
        for (j, c) in cols.into_iter().enumerate() {
            for (op, col) in ops.iter_mut().zip(c?) {
                op.column_mut(j).copy_from_slice(&col);
            }
        }
        let mut e = Self::dense(n, r, ops, spectrum, seed)?;
        e.recipe = "pdo".into();
        Ok(e)
    }

    /// Explicit basis matrices and a random `H` of rank `r` whose range is
    /// drawn from the QR factor of a Gaussian matrix.
    pub fn dense(n: usize, r: usize, ops: Vec<DMatrix<f64>>, spectrum: Spectrum, seed: u64) -> Result<Self> {
        if r == 0 || r > n {
            return Err(Error::invalid(format!("rank {r} outside 1..={n}")));
        }
        if ops.is_empty() || ops.iter().any(|b| b.shape() != (n, n)) {
            return Err(Error::SizeMismatch(format!("basis must be nonempty {n}x{n} matrices")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let range = g.qr().q();
        let s = DVector::from_vec(spectrum.values(r));
        let h = &range * DMatrix::from_diagonal(&s) * range.transpose();
        let h = (&h + h.transpose()).scale(0.5);
        let prods: Vec<DMatrix<f64>> = ops.iter().map(|b| b * &h).collect();
        let p = ops.len();
        let em = DMatrix::from_fn(p, p, |i, j| prods[i].dot(&prods[j]));
        let rs = (r as f64).sqrt();
        let eta = prods.iter().map(|m| spectral_norm(m) * rs / m.norm()).fold(0.0f64, f64::max);
        let e = Self { recipe: "dense".into(), n, r, p, eta, em, ops: Ops::Dense { h, range, ops } };
        e.check_mean()?;
        Ok(e)
    }

    fn structured_h(n: usize, r: usize, spectrum: Spectrum, seed: u64) -> Result<(StructuredOrthogonal, Vec<f64>)> {
        if r == 0 || r > n {
            return Err(Error::invalid(format!("rank {r} outside 1..={n}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((StructuredOrthogonal::random(n, &mut rng)?, spectrum.values(r)))
    }

    fn check_mean(&self) -> Result<()> {
        let eig = self.em.clone().symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        if !(lo > 1e-12 * hi) {
            return Err(Error::Singular(format!("mean normal matrix of recipe `{}` has eigenvalues in [{lo:e}, {hi:e}]", self.recipe)));
        }
        Ok(())
    }

    /// `sum_k s_k^2 (B_i u_k)(B_j u_k)` accumulated one eigenvector at a time.
    fn exact_mean(&self) -> DMatrix<f64> {
        let Ops::Structured { u, s, ops } = &self.ops else { unreachable!("dense ensembles compute EM directly") };
        let (n, p) = (self.n, self.p);
        let chunk = 64;
        let parts = par::map_range(s.len().div_ceil(chunk), |c| {
            let mut em = DMatrix::zeros(p, p);
            let mut w = vec![vec![0.0; n]; p];
            for k in c * chunk..((c + 1) * chunk).min(s.len()) {
                let mut uk = vec![0.0; n];
                uk[k] = 1.0;
                u.apply(&mut uk);
                for (wi, b) in w.iter_mut().zip(ops) {
                    wi.copy_from_slice(&uk);
                    b.apply(wi);
                }
                let s2 = s[k] * s[k];
                for i in 0..p {
                    for j in i..p {
                        let d: f64 = w[i].iter().zip(&w[j]).map(|(a, b)| a * b).sum();
                        em[(i, j)] += s2 * d;
                    }
                }
            }
            em
        });
        let mut em = DMatrix::zeros(p, p);
        for part in parts {
            em += part;
        }
        em.fill_lower_triangle_with_upper_triangle();
        em
    }

    /// `H y`.
    pub fn apply_h(&self, y: &[f64]) -> Vec<f64> {
        match &self.ops {
            Ops::Structured { u, s, .. } => {
                let mut v = y.to_vec();
                u.apply_transpose(&mut v);
                v.iter_mut().enumerate().for_each(|(k, x)| *x *= s.get(k).copied().unwrap_or(0.0));
                u.apply(&mut v);
                v
            }
            Ops::Dense { h, .. } => (h * DVector::from_column_slice(y)).as_slice().to_vec(),
        }
    }

    /// Orthogonal projection of `y` onto the range of `H`.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        match &self.ops {
            Ops::Structured { u, s, .. } => {
                let mut v = y.to_vec();
                u.apply_transpose(&mut v);
                v[s.len()..].iter_mut().for_each(|x| *x = 0.0);
                u.apply(&mut v);
                v
            }
            Ops::Dense { range, .. } => {
                let y = DVector::from_column_slice(y);
                (range * (range.transpose() * y)).as_slice().to_vec()
            }
        }
    }

    /// Dense `H`; intended for small checks.
    pub fn h_matrix(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            let mut e = vec![0.0; self.n];
            e[j] = 1.0;
            h.column_mut(j).copy_from_slice(&self.apply_h(&e));
        }
        h
    }

    /// `M_ij = (B_i H y) . (B_j H y)`.
    pub fn sample_m(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        if y.len() != self.n {
            return Err(Error::SizeMismatch(format!("sample of length {} for n={}", y.len(), self.n)));
        }
        let hy = self.apply_h(y);
        let w: Vec<Vec<f64>> = match &self.ops {
            Ops::Structured { u, s, ops } if ops.is_empty() => {
                // H^+ H y = P y
                let mut v = hy;
                u.apply_transpose(&mut v);
                v.iter_mut().zip(s).for_each(|(x, s)| *x /= s);
                u.apply(&mut v);
                vec![v]
            }
            Ops::Structured { ops, .. } => ops
                .iter()
                .map(|b| {
                    let mut v = hy.clone();
                    b.apply(&mut v);
                    v
                })
                .collect(),
            Ops::Dense { ops, .. } => {
                let hy = DVector::from_vec(hy);
                ops.iter().map(|b| (b * &hy).as_slice().to_vec()).collect()
            }
        };
        let p = w.len();
        let mut m = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let d: f64 = w[i].iter().zip(&w[j]).map(|(a, b)| a * b).sum();
                m[(i, j)] = d;
                m[(j, i)] = d;
            }
        }
        Ok(m)
    }

    /// Condition number of `EM`.
    pub fn kappa(&self) -> f64 {
        let eig = self.em.clone().symmetric_eigenvalues();
        eig.max() / eig.min()
    }

    /// `||M - EM|| / ||EM||` for `M` drawn from `y`, with `y` first projected
    /// onto the range of `H` when `project` is set.
    pub fn deviation(&self, y: &[f64], project: bool) -> Result<(f64, DMatrix<f64>)> {
        let m = if project { self.sample_m(&self.project(y))? } else { self.sample_m(y)? };
        Ok((spectral_norm(&(&m - &self.em)) / spectral_norm(&self.em), m))
    }

    /// `sqrt(160 eta^4 p^2 log p / r)`: the accuracy the explicit constant
    /// guarantees at this rank. Undefined for `p < 2`.
    pub fn explicit_epsilon(&self) -> Option<f64> {
        if self.p < 2 {
            return None;
        }
        let p = self.p as f64;
        Some((160.0 * self.eta.powi(4) * p * p * p.ln() / self.r as f64).sqrt())
    }
}

/// Eigenvalue margin of one sample `M` against its mean.
#[derive(Clone, Debug)]
pub struct MarginReport {
    pub lambda_min: f64,
    /// `(1/kappa - eps) ||EM||` with `eps = ||M - EM|| / ||EM||`.
    pub bound: f64,
    pub kappa: f64,
    pub eps: f64,
}

impl MarginReport {
    pub fn holds(&self) -> bool {
        self.lambda_min >= self.bound - 1e-12 * self.bound.abs().max(self.lambda_min.abs())
    }
}

/// Checks `lambda_min(M) >= (1/kappa - eps) ||EM||` for symmetric `M`, `EM`.
pub fn min_eig_margin(em: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<MarginReport> {
    if em.shape() != m.shape() || !em.is_square() {
        return Err(Error::SizeMismatch(format!("EM {:?} vs M {:?}", em.shape(), m.shape())));
    }
    let eig = em.clone().symmetric_eigenvalues();
    let norm = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let kappa = norm / eig.min();
    let eps = spectral_norm(&(m - em)) / norm;
    let lambda_min = m.clone().symmetric_eigenvalues().min();
    Ok(MarginReport { lambda_min, bound: (1.0 / kappa - eps) * norm, kappa, eps })
}

/// Deviation distribution at one rank.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub recipe: String,
    pub n: usize,
    pub r: usize,
    pub p: usize,
    pub eta: f64,
    pub kappa: f64,
    /// Sorted relative deviations `||M - EM|| / ||EM||`.
    pub deviations: Vec<f64>,
    pub explicit_eps: Option<f64>,
    /// Samples violating the Weyl margin; always expected to be zero.
    pub margin_failures: usize,
}

impl SweepRow {
    pub fn quantile(&self, q: f64) -> f64 {
        let d = &self.deviations;
        let pos = q.clamp(0.0, 1.0) * (d.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        d[lo] + (d[hi] - d[lo]) * (pos - lo as f64)
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// Samples at or above the explicit accuracy, when that accuracy is at most 1.
    pub fn explicit_violations(&self) -> Option<usize> {
        self.explicit_eps.filter(|&e| e <= 1.0).map(|e| self.deviations.iter().filter(|&&d| d >= e).count())
    }
}

/// How ensembles are built for each rank in a sweep.
#[derive(Clone, Debug)]
pub enum Recipe {
    /// Structured orthogonals on `n` points.
    Structured { n: usize, spectrum: Spectrum },
    /// Pseudodifferential design operators on a `grid_n` grid.
    Pdo { grid_n: usize, spec: BasisSpec, spectrum: Spectrum },
}

impl Recipe {
    pub fn build(&self, r: usize, p: usize, seed: u64) -> Result<SyntheticEnsemble> {
        match self {
            Recipe::Structured { n, spectrum } => SyntheticEnsemble::structured(*n, r, p, *spectrum, seed),
            Recipe::Pdo { grid_n, spec, spectrum } => {
                let e = SyntheticEnsemble::pdo(*grid_n, r, spec.clone(), *spectrum, seed)?;
                if e.p != p {
                    return Err(Error::invalid(format!("basis spec gives p={} but p={p} was requested", e.p)));
                }
                Ok(e)
            }
        }
    }
}

/// For every rank in `ranks`, builds an ensemble and records the deviation of
/// `trials` independent samples, each drawn with `y` projected onto `Ran(H)`.
pub fn concentration_sweep(recipe: &Recipe, p: usize, ranks: &[usize], trials: usize, seed: u64) -> Result<Vec<SweepRow>> {
    if trials == 0 {
        return Err(Error::invalid("sweep needs at least one trial per rank"));
    }
    ranks
        .iter()
        .enumerate()
        .map(|(ri, &r)| {
            let e = recipe.build(r, p, sample_seed(seed, ri))?;
            let samples = par::map_range(trials, |t| -> Result<(f64, bool)> {
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed ^ 0x5EED, ri * trials + t));
                let y = gaussian(&mut rng, e.n);
                let (dev, m) = e.deviation(&y, true)?;
                Ok((dev, min_eig_margin(&e.em, &m)?.holds()))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let mut deviations: Vec<f64> = samples.iter().map(|s| s.0).collect();
            deviations.sort_by(f64::total_cmp);
            Ok(SweepRow {
                recipe: e.recipe.clone(),
                n: e.n,
                r,
                p: e.p,
                eta: e.eta,
                kappa: e.kappa(),
                deviations,
                explicit_eps: e.explicit_epsilon(),
                margin_failures: samples.iter().filter(|s| !s.1).count(),
            })
        })
        .collect()
}

/// Quantiles written per row by [`sweep_csv`].
pub const CSV_QUANTILES: [f64; 5] = [0.1, 0.5, 0.9, 0.99, 1.0];

/// Table with columns `recipe,n,r,p,eta,kappa,quantile,deviation`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("recipe,n,r,p,eta,kappa,quantile,deviation\n");
    for row in rows {
        for q in CSV_QUANTILES {
            let _ = writeln!(out, "{},{},{},{},{},{},{},{}", row.recipe, row.n, row.r, row.p, row.eta, row.kappa, q, row.quantile(q));
        }
    }
    out
}

pub fn write_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(sweep_csv(rows).as_bytes())?;
    Ok(())
}

/// Settings of [`run_suite`].
#[derive(Clone, Debug)]
pub struct SuiteOptions {
    /// Random Gaussian matrices for the tail check, and their size.
    pub matrices: usize,
    pub dim: usize,
    pub samples: usize,
    pub lambdas: Vec<f64>,
    /// Structured-recipe size and spectrum.
    pub n: usize,
    pub spectrum: Spectrum,
    pub p: usize,
    pub ranks: Vec<usize>,
    pub trials: usize,
    /// Basis sizes and ranks where the explicit constant is checked (flat spectrum).
    pub explicit_p: Vec<usize>,
    pub explicit_ranks: Vec<usize>,
    pub explicit_trials: usize,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            matrices: 10,
            dim: 48,
            samples: 100_000,
            lambdas: vec![3.0, 10.0 * 10f64.ln()],
            n: 4096,
            spectrum: Spectrum::Linear { top: 2.0 },
            p: 10,
            ranks: vec![50, 200, 800, 3200],
            trials: 60,
            explicit_p: vec![2, 3],
            explicit_ranks: vec![2048, 4096],
            explicit_trials: 100,
            seed: 2024,
        }
    }
}

/// Everything [`run_suite`] measured.
#[derive(Clone, Debug)]
pub struct SuiteReport {
    /// `(matrix index, report)` per matrix and lambda.
    pub tails: Vec<(usize, TailReport)>,
    pub sweep: Vec<SweepRow>,
    pub explicit: Vec<SweepRow>,
}

impl SuiteReport {
    pub fn tails_hold(&self) -> bool {
        self.tails.iter().all(|(_, t)| t.holds())
    }

    pub fn sweep_strictly_decreasing(&self) -> bool {
        self.sweep.windows(2).all(|w| w[1].median() < w[0].median())
    }

    /// Explicit-constant violations over non-vacuous rows, and how many rows were checked.
    pub fn explicit_violations(&self) -> (usize, usize) {
        let checked: Vec<usize> = self.explicit.iter().filter_map(|r| r.explicit_violations()).collect();
        (checked.iter().sum(), checked.len())
    }

    pub fn margin_failures(&self) -> usize {
        self.sweep.iter().chain(&self.explicit).map(|r| r.margin_failures).sum()
    }

    /// Columns `matrix,lambda,threshold,trials,exceedances,frequency,bound`.
    pub fn tail_csv(&self) -> String {
        let mut out = String::from("matrix,lambda,threshold,trials,exceedances,frequency,bound\n");
        for (m, t) in &self.tails {
            let _ = writeln!(out, "{m},{},{},{},{},{},{}", t.lambda, t.threshold, t.trials, t.exceedances, t.frequency(), t.bound);
        }
        out
    }

    pub fn sweep_csv(&self) -> String {
        let rows: Vec<SweepRow> = self.sweep.iter().chain(&self.explicit).cloned().collect();
        sweep_csv(&rows)
    }
}

/// Tail bound on random asymmetric Gaussian matrices, the rank sweep at
/// fixed `p`, and the explicit-constant check.
pub fn run_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut tails = Vec::new();
    for m in 0..opts.matrices {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(opts.seed, m));
        let a = DMatrix::from_fn(opts.dim, opts.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        for t in quadratic_tail(&a, &opts.lambdas, opts.samples, sample_seed(opts.seed ^ 0x7A11, m))? {
            tails.push((m, t));
        }
    }
    let recipe = Recipe::Structured { n: opts.n, spectrum: opts.spectrum };
    let sweep = concentration_sweep(&recipe, opts.p, &opts.ranks, opts.trials, opts.seed)?;
    let flat = Recipe::Structured { n: opts.n, spectrum: Spectrum::Flat };
    let mut explicit = Vec::new();
    for &p in &opts.explicit_p {
        explicit.extend(concentration_sweep(&flat, p, &opts.explicit_ranks, opts.explicit_trials, opts.seed + p as u64)?);
    }
    Ok(SuiteReport { tails, sweep, explicit })
}
