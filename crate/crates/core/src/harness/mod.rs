//! Experiment driver: gradient-descent reference, Rn/Kn preconditioner
//! comparison, generalization study, variable-media sweep, eps-rank table,
//! and the files they produce.

pub mod config;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

pub use config::{
    AcquisitionConfig, BasisConfig, ExperimentConfig, GeneralizationConfig, MediumConfig, MediumKind, Preconditioner,
    ProbingConfig, ReferenceConfig,
};

use crate::assets;
use crate::born::LinearizedProblem;
use crate::curvelet::CurveletPlan;
use crate::error::{Error, Result};
use crate::grid::{mse, read_grid, write_grid, write_pgm, ModelGrid};
use crate::illumination::{build_mask_cached, Geometry, IlluminationMask, SpeedField, VisibilityConfig};
use crate::pdo::{BasisSpec, PdoBasis};
use crate::probing::{self, eps_rank, fit, krylov_trials, make_trial, FitOptions, FitReport, ProbePair, TrialContext, TrialKind};
use crate::wavesim::{snap, Acquisition, Medium, ShotData};

/// Output of [`gradient_descent_reference`].
#[derive(Clone, Debug)]
pub struct Descent {
    pub image: ModelGrid,
    /// `J_k = ||d - F dm_k||^2 / 2` for `k = 0..=steps`.
    pub misfit: Vec<f64>,
    pub alpha: f64,
    /// Power-iteration estimate of `||H||`.
    pub rho: f64,
}

/// Power-iteration estimate of `||H||` from a fixed pseudo-random start.
pub fn hessian_norm_estimate(prob: &LinearizedProblem, iterations: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let mut v = ModelGrid::from_fn(prob.n(), |_, _| rng.sample(StandardNormal));
    v.scale(1.0 / v.norm());
    let mut rho = 0.0;
    for _ in 0..iterations.max(1) {
        let hv = prob.hessian_apply(&v)?;
        rho = hv.norm();
        if rho == 0.0 {
            return Err(Error::Singular("Hessian annihilated the power-iteration vector".into()));
        }
        v = hv.scaled(1.0 / rho);
    }
    Ok(rho)
}

/// `steps` iterations of `dm <- dm + alpha F*(d - F dm)` from zero with
/// `alpha = 0.9 / rho`, `rho` from 20 power iterations.
pub fn gradient_descent_reference(prob: &LinearizedProblem, d: &ShotData, steps: usize) -> Result<Descent> {
    gradient_descent(prob, d, steps, 20)
}

/// [`gradient_descent_reference`] with a chosen number of power iterations.
/// Three consecutive misfit increases abort with [`Error::Divergence`].
pub fn gradient_descent(prob: &LinearizedProblem, d: &ShotData, steps: usize, power_iterations: usize) -> Result<Descent> {
    if steps == 0 {
        return Err(Error::invalid("gradient descent needs at least one step"));
    }
    let rho = hessian_norm_estimate(prob, power_iterations)?;
    fixed_step_descent(prob, d, steps, 0.9 / rho)
}

/// Gradient descent with a given step size; `rho` of the result is `0.9 / alpha`.
pub fn fixed_step_descent(prob: &LinearizedProblem, d: &ShotData, steps: usize, alpha: f64) -> Result<Descent> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("step size must be positive, got {alpha}")));
    }
    let mut dm = ModelGrid::zeros(prob.n());
    let mut misfit = Vec::with_capacity(steps + 1);
    let mut rising = 0;
    for k in 0..=steps {
        let mut r = d.clone();
        r.axpy(-1.0, &prob.born_forward(&dm)?);
        let j = 0.5 * r.norm().powi(2);
        if !j.is_finite() {
            return Err(Error::Divergence { alpha });
        }
        if misfit.last().is_some_and(|&prev| j > prev) {
            rising += 1;
            if rising >= 3 {
                return Err(Error::Divergence { alpha });
            }
        } else {
            rising = 0;
        }
        misfit.push(j);
        if k == steps {
            break;
        }
        dm.axpy(alpha, &prob.migrate(&r)?);
    }
    Ok(Descent { image: dm, misfit, alpha, rho: 0.9 / alpha })
}

/// Marmousi blend of smoothing `gamma` as a medium (speed converted to
/// squared slowness).
pub fn blend_medium(gamma: f64, n: usize) -> Result<Medium> {
    let c = assets::marmousi_blend(gamma, n)?;
    speed_medium(&c)
}

fn speed_medium(c: &ModelGrid) -> Result<Medium> {
    Medium::new(ModelGrid::new(c.n(), c.data().iter().map(|v| 1.0 / (v * v)).collect())?)
}

/// Components of `g` on the illuminated set: analyze, zero outside the mask, synthesize.
pub fn masked(plan: &CurveletPlan, mask: &IlluminationMask, g: &ModelGrid) -> Result<ModelGrid> {
    let mut c = plan.analyze(g)?;
    mask.apply(&mut c)?;
    plan.synthesize(&c)
}

/// Default thresholds of the eps-rank table.
pub const EPS_LIST: [f64; 6] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

/// Counts of `sigma_i / sigma_1 > eps` of the dense Hessian. The Hessian is
/// symmetric, so its singular values are the absolute eigenvalues.
pub fn eps_rank_table(prob: &LinearizedProblem, eps: &[f64], allow_large: bool) -> Result<Vec<(f64, usize)>> {
    let h = prob.dense_hessian(allow_large)?;
    let h = (&h + h.transpose()).scale(0.5);
    let sv: Vec<f64> = h.symmetric_eigenvalues().iter().map(|v| v.abs()).collect();
    Ok(eps.iter().map(|&e| (e, eps_rank(&sv, e))).collect())
}

pub fn eps_rank_csv(table: &[(f64, usize)], n: usize) -> String {
    let mut out = String::from("eps,rank,n2\n");
    for (e, r) in table {
        let _ = writeln!(out, "{e:e},{r},{}", n * n);
    }
    out
}

/// Background medium (with the matching ray-tracing speed) and survey of a config.
pub fn survey(cfg: &ExperimentConfig) -> Result<(Medium, SpeedField, Acquisition)> {
    let n = cfg.n;
    let (medium, speed) = match cfg.medium.kind {
        MediumKind::Constant => (Medium::constant(n, cfg.medium.speed)?, SpeedField::constant(cfg.medium.speed)?),
        MediumKind::Marmousi => {
            let c = assets::marmousi_blend(cfg.medium.gamma, n)?;
            (speed_medium(&c)?, SpeedField::from_grid(&c)?)
        }
    };
    let depth = cfg.acquisition.depth;
    let sources = cfg.acquisition.sources.iter().map(|&x| (snap(x, n), depth)).collect();
    let receivers = (0..n).map(|ix| (ix, depth)).collect();
    let acq = Acquisition::new(&medium, sources, receivers)?;
    Ok((medium, speed, acq))
}

/// Illumination mask of a survey with the default visibility settings.
pub fn illumination_mask(plan: &CurveletPlan, speed: &SpeedField, acq: &Acquisition, cache: Option<&Path>) -> Result<IlluminationMask> {
    let geometry = Geometry::from_acquisition(acq, plan.n());
    let vis = VisibilityConfig::new(plan, speed);
    build_mask_cached(plan, speed, &geometry, &vis, cache)
}

/// Medium, survey, problem, frame and mask built from a config.
pub struct Setup {
    pub medium: Medium,
    pub speed: SpeedField,
    pub acq: Acquisition,
    pub problem: LinearizedProblem,
    pub plan: CurveletPlan,
    pub mask: IlluminationMask,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let (medium, speed, acq) = survey(cfg)?;
        let cache = cfg.cache_dir();
        let problem = LinearizedProblem::with_cache(medium.clone(), acq.clone(), cache.as_deref())?;
        let plan = CurveletPlan::new(cfg.n)?;
        let mask = illumination_mask(&plan, &speed, &acq, cache.as_deref())?;
        Ok(Setup { medium, speed, acq, problem, plan, mask })
    }

    fn context(&self, sigma: f64) -> TrialContext<'_> {
        TrialContext { plan: Some(&self.plan), mask: Some(&self.mask), problem: Some(&self.problem), sigma }
    }
}

/// Reflectivity named by the config, at the config's grid size.
pub fn load_reflectivity(cfg: &ExperimentConfig) -> Result<ModelGrid> {
    let g = match cfg.reflectivity.as_str() {
        "marmousi" => assets::marmousi_reflectivity(cfg.n)?,
        "layered" => assets::layered_reflectivity(cfg.n),
        path => read_grid(path)?,
    };
    Ok(if g.n() == cfg.n { g } else { g.resample(cfg.n) })
}

/// One line of `mse.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct MseRow {
    pub label: String,
    pub truncation: String,
    pub p: usize,
    pub trials: usize,
    pub mse_masked_reference: f64,
    pub mse_reference: f64,
    pub mse_masked_true: f64,
    pub residual: Option<f64>,
    pub m_cond: Option<f64>,
}

/// One line of `generalization.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizationRow {
    pub seed: u64,
    pub label: String,
    pub truncation: String,
    pub p: usize,
    pub mse: f64,
}

/// One line of `gamma_sweep.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaRow {
    pub gamma: f64,
    pub label: String,
    pub truncation: String,
    pub p: usize,
    pub mse_masked_reference: f64,
    pub mse_reference: f64,
}

/// What [`run_experiment`] measured and where it wrote it.
#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub dir: PathBuf,
    pub config_hash: String,
    pub rows: Vec<MseRow>,
    pub generalization: Vec<GeneralizationRow>,
    pub misfit: Vec<f64>,
    pub mask_count: usize,
}

impl ExperimentReport {
    pub fn row(&self, label: &str, truncation: &str) -> Option<&MseRow> {
        self.rows.iter().find(|r| r.label == label && r.truncation == truncation)
    }

    pub fn generalization_error(&self, seed: u64, label: &str, truncation: &str) -> Option<f64> {
        self.generalization.iter().find(|r| r.seed == seed && r.label == label && r.truncation == truncation).map(|r| r.mse)
    }
}

fn truncation_name(spec: &BasisSpec) -> String {
    format!("{}-{}-{}", spec.lambda_max, spec.q1_max, spec.q2_max)
}

fn short(hash: &str) -> &str {
    &hash[..16]
}

/// Files written by a run, with content hashes for the manifest.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn record(&mut self, name: &str) -> Result<()> {
        let bytes = fs::read(self.dir.join(name))?;
        let h: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        self.files.retain(|(n, _)| n != name);
        self.files.push((name.to_string(), h));
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        if let Some(parent) = self.dir.join(name).parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(self.dir.join(name), body)?;
        self.record(name)
    }

    fn image(&mut self, stem: &str, g: &ModelGrid) -> Result<()> {
        write_pgm(self.dir.join(format!("{stem}.pgm")), g)?;
        self.record(&format!("{stem}.pgm"))
    }

    fn grid(&mut self, stem: &str, g: &ModelGrid) -> Result<()> {
        write_grid(self.dir.join(format!("{stem}.pkgrid")), g)?;
        self.record(&format!("{stem}.pkgrid"))
    }

    fn fit(&mut self, stem: &str, r: &FitReport) -> Result<()> {
        r.write(self.dir.join("fits"), stem)?;
        self.record(&format!("fits/{stem}.txt"))?;
        self.record(&format!("fits/{stem}.pksym"))
    }

    fn manifest(&self, name: &str, cfg: &ExperimentConfig, status: &str, elapsed: f64) -> Result<()> {
        let mut m = String::from("probekit experiment manifest\n");
        let _ = writeln!(m, "status: {status}");
        let _ = writeln!(m, "config_sha256: {}", cfg.hash_hex());
        let _ = writeln!(m, "seed: {}", cfg.seed);
        let seeds: Vec<String> = cfg.generalization.seeds.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(m, "generalization_seeds: {}", seeds.join(","));
        let _ = writeln!(m, "version: {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(m, "elapsed_s: {elapsed:.1}");
        m.push_str("\n[outputs]\n");
        for (f, h) in &self.files {
            let _ = writeln!(m, "{h}  {f}");
        }
        m.push_str("\n[config]\n");
        m.push_str(&cfg.to_toml());
        fs::write(self.dir.join(name), m)?;
        Ok(())
    }
}

/// Fitted preconditioners keyed by label, truncation index and trial seed.
struct Fits<'a> {
    setup: &'a Setup,
    bases: Vec<PdoBasis>,
    opts: FitOptions,
    kind: TrialKind,
    sigma: f64,
    random: HashMap<u64, Vec<ProbePair>>,
    krylov: Vec<ProbePair>,
    d: ShotData,
    cache: HashMap<(Preconditioner, usize, u64), FitReport>,
}

impl<'a> Fits<'a> {
    fn random_pairs(&mut self, seed: u64, count: usize) -> Result<&[ProbePair]> {
        let have = self.random.get(&seed).map_or(0, |v| v.len());
        if have < count {
            let ctx = self.setup.context(self.sigma);
            let op: &dyn probing::Operator = &self.setup.problem;
            let seeds: Vec<u64> = (have..count).map(|t| probing::trial_seed(seed, t)).collect();
            let ys = seeds.iter().map(|&s| make_trial(self.kind, &ctx, op, s)).collect::<Result<Vec<_>>>()?;
            let xs = crate::par::map_slice(&ys, |y| op.apply(y));
            let entry = self.random.entry(seed).or_default();
            for ((y, x), s) in ys.into_iter().zip(xs).zip(seeds) {
                entry.push(ProbePair { y, x: x?, seed: s, kind: Some(self.kind) });
            }
        }
        Ok(&self.random[&seed][..count])
    }

    fn krylov_pairs(&mut self, count: usize) -> Result<&[ProbePair]> {
        if self.krylov.len() < count {
            self.krylov = krylov_trials(&self.setup.problem, &self.d, count)?;
        }
        Ok(&self.krylov[..count])
    }

    fn get(&mut self, pc: Preconditioner, spec: usize, seed: u64) -> Result<&FitReport> {
        // Krylov fits do not depend on the trial seed
        let seed = if matches!(pc, Preconditioner::Krylov(_)) { 0 } else { seed };
        let key = (pc, spec, seed);
        if !self.cache.contains_key(&key) {
            let pairs = match pc {
                Preconditioner::Random(k) => self.random_pairs(seed, k)?.to_vec(),
                Preconditioner::Krylov(k) => self.krylov_pairs(k)?.to_vec(),
            };
            let r = fit(&pairs, &self.bases[spec], self.opts)?;
            self.cache.insert(key, r);
        }
        Ok(&self.cache[&key])
    }
}

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| e.at_stage(name))
}

/// Full pipeline: data from the reflectivity, migration, mask, reference,
/// trials, fits, preconditioned images and metrics. Writes `mse.csv`,
/// `generalization.csv`, `misfit.csv`, PGM images, fit reports and
/// `manifest.txt` under `cfg.output`. On failure the manifest records the
/// failing stage and the outputs written so far.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut out = Outputs::new(&cfg.output)?;
    let result = experiment_body(cfg, &mut out);
    let elapsed = start.elapsed().as_secs_f64();
    match &result {
        Ok(_) => out.manifest("manifest.txt", cfg, "complete", elapsed)?,
        Err(e) => out.manifest("manifest.txt", cfg, &format!("failed (partial outputs): {e}"), elapsed)?,
    }
    result
}

fn experiment_body(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<ExperimentReport> {
    let hash = cfg.hash_hex();
    let tag = short(&hash).to_string();
    let setup = stage("setup", || Setup::new(cfg))?;
    let (plan, mask) = (&setup.plan, &setup.mask);
    let truth = stage("reflectivity", || load_reflectivity(cfg))?;
    let d = stage("modeling", || setup.problem.born_forward(&truth))?;
    let migrated = stage("migration", || setup.problem.migrate(&d))?;
    let descent = stage("reference", || {
        gradient_descent(&setup.problem, &d, cfg.reference.steps, cfg.reference.power_iterations)
    })?;
    let reference = descent.image.clone();

    stage("write", || {
        out.image("reflectivity", &truth)?;
        out.image("migrated", &migrated)?;
        out.image("reference", &reference)?;
        out.grid("migrated", &migrated)?;
        out.grid("reference", &reference)?;
        let mut csv = String::from("config,step,misfit\n");
        for (k, j) in descent.misfit.iter().enumerate() {
            let _ = writeln!(csv, "{tag},{k},{j}");
        }
        out.text("misfit.csv", &csv)
    })?;

    let specs = cfg.basis.specs(cfg.n)?;
    let bases = stage("basis", || specs.iter().map(|s| PdoBasis::new(s.clone(), cfg.n)).collect::<Result<Vec<_>>>())?;
    let (ref_m, truth_m) = stage("metrics", || Ok((masked(plan, mask, &reference)?, masked(plan, mask, &truth)?)))?;
    let metrics = |img: &ModelGrid| -> Result<(f64, f64, f64)> {
        let m = masked(plan, mask, img)?;
        Ok((mse(&ref_m, &m)?, mse(&reference, img)?, mse(&truth_m, &m)?))
    };

    let mut rows = Vec::new();
    stage("baseline", || {
        let (a, b, c) = metrics(&migrated)?;
        rows.push(MseRow { label: "migrated".into(), truncation: "-".into(), p: 0, trials: 0, mse_masked_reference: a, mse_reference: b, mse_masked_true: c, residual: None, m_cond: None });
        // best scalar multiple of the migrated image against the reference
        let s = reference.dot(&migrated) / migrated.norm_sq();
        let (a, b, c) = metrics(&migrated.scaled(s))?;
        rows.push(MseRow { label: "migrated_scaled".into(), truncation: "-".into(), p: 1, trials: 0, mse_masked_reference: a, mse_reference: b, mse_masked_true: c, residual: None, m_cond: None });
        Ok(())
    })?;

    let mut fits = Fits {
        setup: &setup,
        bases,
        opts: FitOptions { tikhonov: cfg.probing.tikhonov },
        kind: cfg.trial_kind()?,
        sigma: cfg.probing.sigma,
        random: HashMap::new(),
        krylov: Vec::new(),
        d: d.clone(),
        cache: HashMap::new(),
    };
    let labels = cfg.preconditioners()?;
    stage("fit", || {
        if let Some(p) = fits.random_pairs(cfg.seed, 1)?.first() {
            out.image("trial", &p.y.clone())?;
        }
        for (si, spec) in specs.iter().enumerate() {
            let trunc = truncation_name(spec);
            for &pc in &labels {
                let r = fits.get(pc, si, cfg.seed)?.clone();
                let img = r.apply(&fits.bases[si], &migrated)?;
                let (a, b, c) = metrics(&img)?;
                rows.push(MseRow { label: pc.to_string(), truncation: trunc.clone(), p: r.p, trials: r.trials, mse_masked_reference: a, mse_reference: b, mse_masked_true: c, residual: Some(r.residual), m_cond: Some(r.m_cond) });
                out.image(&format!("preconditioned_{pc}_{trunc}"), &img)?;
                out.fit(&format!("{pc}_{trunc}"), &r)?;
            }
            if cfg.probing.true_fit {
                let pair = ProbePair { y: truth.clone(), x: migrated.clone(), seed: 0, kind: None };
                let r = fit(&[pair], &fits.bases[si], fits.opts)?;
                let img = r.apply(&fits.bases[si], &migrated)?;
                let (a, b, c) = metrics(&img)?;
                rows.push(MseRow { label: "true".into(), truncation: trunc.clone(), p: r.p, trials: 1, mse_masked_reference: a, mse_reference: b, mse_masked_true: c, residual: Some(r.residual), m_cond: Some(r.m_cond) });
                out.fit(&format!("true_{trunc}"), &r)?;
            }
        }
        Ok(())
    })?;

    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut csv = String::from("config,preconditioner,truncation,p,trials,mse_masked_reference,mse_reference,mse_masked_true,fit_residual,m_cond\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{tag},{},{},{},{},{},{},{},{},{}",
            r.label, r.truncation, r.p, r.trials, r.mse_masked_reference, r.mse_reference, r.mse_masked_true, opt(r.residual), opt(r.m_cond)
        );
    }
    stage("write", || out.text("mse.csv", &csv))?;

    let mut generalization = Vec::new();
    if !cfg.generalization.seeds.is_empty() {
        let glabels = cfg.generalization_preconditioners()?;
        stage("generalization", || {
            let ctx = setup.context(cfg.probing.sigma);
            for &seed in &cfg.generalization.seeds {
                // the test trial uses a seed no fitting trial of this run can reach
                let y = make_trial(fits.kind, &ctx, &setup.problem, probing::trial_seed(seed, usize::MAX))?;
                let x = setup.problem.hessian_apply(&y)?;
                let y_m = masked(plan, mask, &y)?;
                if seed == cfg.generalization.seeds[0] {
                    out.image("test_trial", &y)?;
                }
                for (si, spec) in specs.iter().enumerate() {
                    for &pc in &glabels {
                        let r = fits.get(pc, si, seed)?.clone();
                        let img = r.apply(&fits.bases[si], &x)?;
                        let p = r.p;
                        generalization.push(GeneralizationRow {
                            seed,
                            label: pc.to_string(),
                            truncation: truncation_name(spec),
                            p,
                            mse: mse(&y_m, &masked(plan, mask, &img)?)?,
                        });
                    }
                }
            }
            let mut csv = String::from("config,seed,preconditioner,truncation,p,mse\n");
            for r in &generalization {
                let _ = writeln!(csv, "{tag},{},{},{},{},{}", r.seed, r.label, r.truncation, r.p, r.mse);
            }
            out.text("generalization.csv", &csv)
        })?;
    }

    Ok(ExperimentReport {
        dir: cfg.output.clone(),
        config_hash: hash,
        rows,
        generalization,
        misfit: descent.misfit,
        mask_count: setup.mask.count(),
    })
}

/// Fits `label` over a range of
/// Marmousi blends and writes `gamma_sweep.csv`.
pub fn run_gamma_sweep(cfg: &ExperimentConfig, gammas: &[f64], label: Preconditioner) -> Result<Vec<GammaRow>> {
    if gammas.is_empty() {
        return Err(Error::Config("gamma sweep needs at least one gamma".into()));
    }
    let start = Instant::now();
    let mut out = Outputs::new(&cfg.output)?;
    let hash = cfg.hash_hex();
    let tag = short(&hash).to_string();
    let mut rows = Vec::new();
    let body = (|| -> Result<()> {
        for &gamma in gammas {
            let mut c = cfg.clone();
            c.medium = MediumConfig { kind: MediumKind::Marmousi, gamma, ..cfg.medium.clone() };
            c.validate()?;
            let setup = stage("setup", || Setup::new(&c))?;
            let truth = load_reflectivity(&c)?;
            let d = setup.problem.born_forward(&truth)?;
            let migrated = setup.problem.migrate(&d)?;
            let descent = stage("reference", || gradient_descent(&setup.problem, &d, c.reference.steps, c.reference.power_iterations))?;
            let ref_m = masked(&setup.plan, &setup.mask, &descent.image)?;
            let specs = c.basis.specs(c.n)?;
            let mut fits = Fits {
                setup: &setup,
                bases: specs.iter().map(|s| PdoBasis::new(s.clone(), c.n)).collect::<Result<Vec<_>>>()?,
                opts: FitOptions { tikhonov: c.probing.tikhonov },
                kind: c.trial_kind()?,
                sigma: c.probing.sigma,
                random: HashMap::new(),
                krylov: Vec::new(),
                d: d.clone(),
                cache: HashMap::new(),
            };
            for (si, spec) in specs.iter().enumerate() {
                let r = stage("fit", || fits.get(label, si, c.seed).cloned())?;
                let img = r.apply(&fits.bases[si], &migrated)?;
                rows.push(GammaRow {
                    gamma,
                    label: label.to_string(),
                    truncation: truncation_name(spec),
                    p: r.p,
                    mse_masked_reference: mse(&ref_m, &masked(&setup.plan, &setup.mask, &img)?)?,
                    mse_reference: mse(&descent.image, &img)?,
                });
            }
        }
        let mut csv = String::from("config,gamma,preconditioner,truncation,p,mse_masked_reference,mse_reference\n");
        for r in &rows {
            let _ = writeln!(csv, "{tag},{},{},{},{},{},{}", r.gamma, r.label, r.truncation, r.p, r.mse_masked_reference, r.mse_reference);
        }
        out.text("gamma_sweep.csv", &csv)
    })();
    let elapsed = start.elapsed().as_secs_f64();
    match &body {
        Ok(()) => out.manifest("manifest_gamma.txt", cfg, "complete", elapsed)?,
        Err(e) => out.manifest("manifest_gamma.txt", cfg, &format!("failed (partial outputs): {e}"), elapsed)?,
    }
    body.map(|()| rows)
}
