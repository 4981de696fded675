//! Randomized probing: trial functions, Hessian applications, and the
//! least-squares fit of an inverse-Hessian symbol expansion.
//!
//! A pair `(y, x = H y)` says `y = H^{-1} x`, so the fit looks for real
//! parameters `theta` with `sum_r theta_r R_r x_t ~ y_t` over all trials, where
//! `R_r` are the real design columns of the symbol basis.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;

use crate::born::LinearizedProblem;
use crate::curvelet::CurveletPlan;
use crate::error::{Error, Result};
use crate::grid::ModelGrid;
use crate::illumination::IlluminationMask;
use crate::par;
use crate::pdo::{FittedOperator, PdoBasis};
use crate::wavesim::ShotData;

/// A symmetric linear map on `n x n` grids.
pub trait Operator: Sync {
    fn n(&self) -> usize;
    fn apply(&self, v: &ModelGrid) -> Result<ModelGrid>;
}

impl Operator for LinearizedProblem {
    fn n(&self) -> usize {
        LinearizedProblem::n(self)
    }

    fn apply(&self, v: &ModelGrid) -> Result<ModelGrid> {
        self.hessian_apply(v)
    }
}

/// Dense matrix acting on row-major grid vectors.
pub struct DenseOperator {
    n: usize,
    matrix: DMatrix<f64>,
}

impl DenseOperator {
    pub fn new(n: usize, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != n * n || matrix.ncols() != n * n {
            return Err(Error::SizeMismatch(format!("{}x{} matrix for n={n}", matrix.nrows(), matrix.ncols())));
        }
        Ok(DenseOperator { n, matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl Operator for DenseOperator {
    fn n(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &ModelGrid) -> Result<ModelGrid> {
        if v.n() != self.n {
            return Err(Error::SizeMismatch(format!("grid n={} for operator n={}", v.n(), self.n)));
        }
        let y = &self.matrix * DVector::from_column_slice(v.data());
        ModelGrid::new(self.n, y.as_slice().to_vec())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrialKind {
    /// Gaussian curvelet coefficients on the illuminated set.
    CurveletMasked,
    /// Gaussian white noise in model space.
    WhiteModel,
    /// Migrated Gaussian white data.
    MigratedWhiteData,
    /// `H` applied to white model noise.
    HessianColored,
    /// As `HessianColored`, then curvelet magnitudes set to 1 (0 below a
    /// small threshold) with phases kept.
    HessianColoredFlattened,
}

impl TrialKind {
    pub const ALL: [TrialKind; 5] = [
        TrialKind::CurveletMasked,
        TrialKind::WhiteModel,
        TrialKind::MigratedWhiteData,
        TrialKind::HessianColored,
        TrialKind::HessianColoredFlattened,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrialKind::CurveletMasked => "curvelet_masked",
            TrialKind::WhiteModel => "white_model",
            TrialKind::MigratedWhiteData => "migrated_white_data",
            TrialKind::HessianColored => "hessian_colored",
            TrialKind::HessianColoredFlattened => "hessian_colored_flattened",
        }
    }
}

impl fmt::Display for TrialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrialKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown trial kind `{s}`")))
    }
}

/// Trial `y`, its image `x = H y`, and how `y` was made.
#[derive(Clone, Debug)]
pub struct ProbePair {
    pub y: ModelGrid,
    pub x: ModelGrid,
    pub seed: u64,
    pub kind: Option<TrialKind>,
}

/// Magnitude threshold of the flattened kind, relative to the largest coefficient.
pub const FLATTEN_THRESHOLD: f64 = 1e-3;

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn white(n: usize, sigma: f64, rng: &mut ChaCha8Rng) -> ModelGrid {
    ModelGrid::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal))
}

/// Masked curvelet noise: `y_mu ~ N(0, sigma^2 |phi_mu|^2)` on the visible
/// set, drawn as a complex Gaussian for one atom of each conjugate pair and
/// mirrored to the other, real on self-conjugate atoms. A mask with no
/// visible atom gives the zero trial.
pub fn draw_trial(plan: &CurveletPlan, mask: &IlluminationMask, sigma: f64, seed: u64) -> Result<ModelGrid> {
    if !mask.matches(plan) {
        return Err(Error::invalid("mask was built for a different frame plan"));
    }
    if mask.is_empty() {
        return Err(Error::invalid("empty illumination mask"));
    }
    let mut rng = rng_for(seed);
    let mut c = plan.zeros();
    for id in 0..plan.len() {
        let a = plan.atom(id);
        if a.conj < id || !mask.get(id) {
            continue;
        }
        let s = sigma * a.norm;
        let (g1, g2): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        if a.conj == id {
            c.data[id] = Complex64::new(s * g1, 0.0);
        } else {
            let v = Complex64::new(g1, g2) * (s * std::f64::consts::FRAC_1_SQRT_2);
            c.data[id] = v;
            c.data[a.conj] = v.conj();
        }
    }
    plan.synthesize(&c)
}

/// What a trial generator may need besides the operator.
#[derive(Clone, Copy, Default)]
pub struct TrialContext<'a> {
    pub plan: Option<&'a CurveletPlan>,
    pub mask: Option<&'a IlluminationMask>,
    pub problem: Option<&'a LinearizedProblem>,
    pub sigma: f64,
}

impl<'a> TrialContext<'a> {
    fn plan(&self) -> Result<&'a CurveletPlan> {
        self.plan.ok_or_else(|| Error::invalid("trial kind needs a curvelet plan"))
    }
}

/// One trial of the given kind, a pure function of `seed`.
pub fn make_trial(kind: TrialKind, ctx: &TrialContext, op: &dyn Operator, seed: u64) -> Result<ModelGrid> {
    let n = op.n();
    let sigma = if ctx.sigma > 0.0 { ctx.sigma } else { 1.0 };
    let mut rng = rng_for(seed);
    match kind {
        TrialKind::CurveletMasked => {
            let mask = ctx.mask.ok_or_else(|| Error::invalid("curvelet trials need an illumination mask"))?;
            draw_trial(ctx.plan()?, mask, sigma, seed)
        }
        TrialKind::WhiteModel => Ok(white(n, sigma, &mut rng)),
        TrialKind::MigratedWhiteData => {
            let prob = ctx.problem.ok_or_else(|| Error::invalid("migrated data trials need the linearized problem"))?;
            let mut d: ShotData = prob.empty_data();
            for v in d.values_mut() {
                *v = sigma * rng.sample::<f64, _>(StandardNormal);
            }
            prob.migrate(&d)
        }
        TrialKind::HessianColored => op.apply(&white(n, sigma, &mut rng)),
        TrialKind::HessianColoredFlattened => {
            let plan = ctx.plan()?;
            let y = op.apply(&white(n, sigma, &mut rng))?;
            let mut c = plan.analyze(&y)?;
            let top = c.data.iter().fold(0.0f64, |m, v| m.max(v.norm()));
            for v in c.data.iter_mut() {
                let r = v.norm();
                *v = if r <= FLATTEN_THRESHOLD * top { Complex64::default() } else { *v / r };
            }
            plan.synthesize(&c)
        }
    }
}

/// Seed of trial `t` in a run seeded with `seed`.
pub fn trial_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(t as u64).rotate_left(17) ^ 0xD1B5_4A32_D192_ED03
}

/// `count` trials of one kind and their images under `op`.
pub fn probe(kind: TrialKind, ctx: &TrialContext, op: &dyn Operator, count: usize, seed: u64) -> Result<Vec<ProbePair>> {
    let seeds: Vec<u64> = (0..count).map(|t| trial_seed(seed, t)).collect();
    let trials = seeds.iter().map(|&s| make_trial(kind, ctx, op, s)).collect::<Result<Vec<_>>>()?;
    let images = par::map_slice(&trials, |y| op.apply(y));
    trials
        .into_iter()
        .zip(images)
        .zip(seeds)
        .map(|((y, x), seed)| Ok(ProbePair { y, x: x?, seed, kind: Some(kind) }))
        .collect()
}

/// Krylov pairs of the migrated image: `y_1 = F* d`, `y_{k+1} = H y_k`.
pub fn krylov_trials(prob: &LinearizedProblem, d: &ShotData, count: usize) -> Result<Vec<ProbePair>> {
    if count == 0 {
        return Err(Error::invalid("Krylov probing needs at least one trial"));
    }
    let mut y = prob.migrate(d)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let x = prob.hessian_apply(&y)?;
        out.push(ProbePair { y, x: x.clone(), seed: 0, kind: None });
        y = x;
    }
    Ok(out)
}

/// Options of [`fit`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Tikhonov weight relative to `trace(M) / p`.
    pub tikhonov: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { tikhonov: 1e-8 }
    }
}

/// Result of a fit.
#[derive(Clone, Debug)]
pub struct FitReport {
    pub operator: FittedOperator,
    /// Real parameters in design-column order.
    pub params: Vec<f64>,
    /// Condition number of `M + tau I`.
    pub m_cond: f64,
    /// Condition number of `M` itself (infinite when singular).
    pub m_cond_unregularized: f64,
    pub tau: f64,
    /// `||sum_r theta_r R_r x - y|| / ||y||` over the stacked trials.
    pub residual: f64,
    pub p: usize,
    pub trials: usize,
    pub r_est: Option<usize>,
    pub kappa_est: Option<f64>,
    pub eta_est: Option<f64>,
    pub seeds: Vec<u64>,
    pub kind: Option<TrialKind>,
}

fn design(basis: &PdoBasis, x: &ModelGrid) -> Result<DMatrix<f64>> {
    let cols = basis.real_columns(x)?;
    let rows = x.data().len();
    Ok(DMatrix::from_iterator(rows, cols.len(), cols.into_iter().flatten()))
}

/// Normal matrix `M` and right-hand side `b` of the stacked system.
pub fn normal_equations(pairs: &[ProbePair], basis: &PdoBasis) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let p = basis.real_dim();
    let parts = par::map_slice(pairs, |pair| -> Result<(DMatrix<f64>, DVector<f64>)> {
        if pair.x.n() != basis.n() || pair.y.n() != basis.n() {
            return Err(Error::SizeMismatch(format!("pair on n={} for a basis on n={}", pair.x.n(), basis.n())));
        }
        let a = design(basis, &pair.x)?;
        Ok((a.tr_mul(&a), a.tr_mul(&DVector::from_column_slice(pair.y.data()))))
    });
    let mut m = DMatrix::zeros(p, p);
    let mut b = DVector::zeros(p);
    for part in parts {
        let (mt, bt) = part?;
        m += mt;
        b += bt;
    }
    Ok((m, b))
}

fn extreme_eigs(m: &DMatrix<f64>) -> (f64, f64) {
    let e = SymmetricEigen::new(m.clone()).eigenvalues;
    (e.min(), e.max())
}

/// `lambda_max / lambda_min`, infinite when `lambda_min <= 0`.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let (lo, hi) = extreme_eigs(m);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Stacked least-squares fit of the real symbol parameters.
pub fn fit(pairs: &[ProbePair], basis: &PdoBasis, opts: FitOptions) -> Result<FitReport> {
    let p = basis.real_dim();
    let rows: usize = pairs.iter().map(|q| q.x.data().len()).sum();
    if pairs.is_empty() || p > rows {
        return Err(Error::invalid(format!("{p} parameters but only {rows} stacked equations")));
    }
    let (m, b) = normal_equations(pairs, basis)?;
    let tau = opts.tikhonov * m.trace() / p as f64;
    let (lo, hi) = extreme_eigs(&m);
    let mut reg = m.clone();
    for i in 0..p {
        reg[(i, i)] += tau;
    }
    let chol = reg
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("normal matrix of size {p} is not positive definite (tau = {tau:e})")))?;
    let theta = chol.solve(&b);
    if !theta.iter().all(|v| v.is_finite()) {
        return Err(Error::Singular("fit produced non-finite parameters".into()));
    }
    let params: Vec<f64> = theta.as_slice().to_vec();

    // residual from the actual design columns, not the normal equations
    let sums = par::map_slice(pairs, |pair| -> Result<(f64, f64)> {
        let a = design(basis, &pair.x)?;
        let r = &a * &theta - DVector::from_column_slice(pair.y.data());
        Ok((r.norm_squared(), pair.y.norm_sq()))
    });
    let (mut num, mut den) = (0.0, 0.0);
    for s in sums {
        let (a, b) = s?;
        num += a;
        den += b;
    }
    let residual = if den > 0.0 { (num / den).sqrt() } else { 0.0 };

    let kinds: Vec<_> = pairs.iter().map(|q| q.kind).collect();
    let kind = if kinds.iter().all(|k| *k == kinds[0]) { kinds[0] } else { None };
    Ok(FitReport {
        operator: FittedOperator::new(basis.spec().clone(), basis.coeffs_from_real(&params)?)?,
        params,
        m_cond: (hi + tau) / (lo + tau).max(f64::MIN_POSITIVE),
        m_cond_unregularized: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        tau,
        residual,
        p,
        trials: pairs.len(),
        r_est: None,
        kappa_est: None,
        eta_est: None,
        seeds: pairs.iter().map(|q| q.seed).collect(),
        kind,
    })
}

impl FitReport {
    /// Applies the fitted approximate inverse.
    pub fn apply(&self, basis: &PdoBasis, f: &ModelGrid) -> Result<ModelGrid> {
        basis.apply_fitted(&self.operator.coeffs, f)
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:e}"));
        let s = &self.operator.spec;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k}: {v}\n"));
        kv("p", self.p.to_string());
        kv("trials", self.trials.to_string());
        kv("trial_kind", self.kind.map_or("mixed".to_string(), |k| k.to_string()));
        kv("seeds", self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","));
        kv("basis", format!("lambda_max={} q1_max={} q2_max={} order={} l={:e}", s.lambda_max, s.q1_max, s.q2_max, s.order, s.l));
        kv("tau", format!("{:e}", self.tau));
        kv("m_cond", format!("{:e}", self.m_cond));
        kv("m_cond_unregularized", format!("{:e}", self.m_cond_unregularized));
        kv("residual", format!("{:e}", self.residual));
        kv("r_est", self.r_est.map_or("none".to_string(), |r| r.to_string()));
        kv("kappa_est", opt(self.kappa_est));
        kv("eta_est", opt(self.eta_est));
        out
    }

    /// Writes `<stem>.txt` (report) and `<stem>.pksym` (coefficients).
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{stem}.txt")), self.to_text())?;
        self.operator.write(dir.join(format!("{stem}.pksym")))
    }
}

/// Number of singular values with `s_i / s_1 > eps` (strict).
pub fn eps_rank(singular: &[f64], eps: f64) -> usize {
    let top = singular.iter().cloned().fold(0.0f64, f64::max);
    if top == 0.0 {
        return 0;
    }
    singular.iter().filter(|&&s| s / top > eps).count()
}

/// Largest `p * n^4` handled by [`dense_diagnostics`].
pub const DENSE_DIAGNOSTIC_LIMIT: usize = 60_000_000;

/// Exact conditioning quantities for a dense symmetric `H`.
#[derive(Clone, Debug)]
pub struct Diagnostics {
    /// `EM_rs = Tr(H R_r^T R_s H)` for white trials.
    pub expected_m: DMatrix<f64>,
    pub kappa: f64,
    /// `max_r sqrt(r) ||H R_r|| / ||H R_r||_F`; `None` without a dense `H`.
    pub eta: Option<f64>,
    pub rank: Option<usize>,
}

/// Dense route: builds every `H R_r` explicitly.
pub fn dense_diagnostics(h: &DMatrix<f64>, basis: &PdoBasis, rank_eps: f64) -> Result<Diagnostics> {
    let n = basis.n();
    let m = n * n;
    let p = basis.real_dim();
    if h.nrows() != m || h.ncols() != m {
        return Err(Error::SizeMismatch(format!("{}x{} Hessian for n={n}", h.nrows(), h.ncols())));
    }
    if p * m * m > DENSE_DIAGNOSTIC_LIMIT {
        return Err(Error::invalid(format!("dense diagnostics need p n^4 = {} entries", p * m * m)));
    }
    // R_r as dense matrices, column j = R_r e_j
    let unit_cols = par::map_range(m, |j| {
        let mut e = ModelGrid::zeros(n);
        e.data_mut()[j] = 1.0;
        basis.real_columns(&e)
    });
    let mut r_mats = vec![DMatrix::zeros(m, m); p];
    for (j, cols) in unit_cols.into_iter().enumerate() {
        for (r, col) in cols?.into_iter().enumerate() {
            r_mats[r].column_mut(j).copy_from_slice(&col);
        }
    }
    let hr: Vec<DMatrix<f64>> = par::map_slice(&r_mats, |r| r * h);
    drop(r_mats);
    let mut em = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let v = hr[a].dot(&hr[b]);
            em[(a, b)] = v;
            em[(b, a)] = v;
        }
    }
    let sv = SymmetricEigen::new(h.clone()).eigenvalues.iter().map(|v| v.abs()).collect::<Vec<_>>();
    let rank = eps_rank(&sv, rank_eps);
    let eta = par::map_slice(&hr, |a| {
        let fro = a.norm();
        if fro == 0.0 {
            return 0.0;
        }
        let spec = a.clone().singular_values().max();
        (rank as f64).sqrt() * spec / fro
    })
    .into_iter()
    .fold(0.0f64, f64::max);
    Ok(Diagnostics { kappa: condition_number(&em), expected_m: em, eta: Some(eta), rank: Some(rank) })
}

/// Monte-Carlo route: average of `M` over `count` white trials.
pub fn sampled_diagnostics(op: &dyn Operator, basis: &PdoBasis, count: usize, seed: u64) -> Result<Diagnostics> {
    let pairs = probe(TrialKind::WhiteModel, &TrialContext::default(), op, count, seed)?;
    let (m, _) = normal_equations(&pairs, basis)?;
    let em = m / count as f64;
    Ok(Diagnostics { kappa: condition_number(&em), expected_m: em, eta: None, rank: None })
}

impl FitReport {
    /// Copies conditioning estimates into the report.
    pub fn with_diagnostics(mut self, d: &Diagnostics) -> Self {
        self.kappa_est = Some(d.kappa);
        self.eta_est = d.eta;
        self.r_est = d.rank;
        self
    }
}

#[cfg(test)]
mod tests;
