use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use probekit::born::LinearizedProblem;
use probekit::curvelet::CurveletPlan;
use probekit::grid::{read_grid, write_grid, write_pgm, ModelGrid};
use probekit::harness::{self, ExperimentConfig, MediumKind, Preconditioner};
use probekit::pdo::{FittedOperator, PdoBasis};
use probekit::probing::{self, FitOptions, ProbePair, TrialContext};
use probekit::theory;
use probekit::wavesim::{read_shot, write_shot};
use probekit::{Error, Result};

#[derive(Parser)]
#[command(name = "probekit", version, about = "Randomized probing of the wave-equation Hessian")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Born-model surface data of a reflectivity.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Output shot file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reverse-time migration of a shot file.
    Migrate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        data: PathBuf,
        /// Output grid file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Illumination mask of the survey.
    Mask {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fits one preconditioner (R<n> or K<n>) and writes its report and coefficients.
    Fit {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "R4")]
        preconditioner: String,
        /// Basis truncation `lambda_max,q1_max,q2_max`.
        #[arg(long, default_value = "4,2,1")]
        truncation: String,
        #[arg(long)]
        order: Option<i32>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; files are `<stem>.txt` and `<stem>.pksym`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "fit")]
        stem: String,
    },
    /// Applies fitted coefficients to a grid.
    Apply {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// eps-rank table of the dense Hessian.
    EpsRank {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated thresholds.
        #[arg(long, default_value = "1e-1,1e-2,1e-3,1e-4,1e-5,1e-6")]
        eps: String,
        /// Allow grids above the dense-Hessian guard.
        #[arg(long)]
        allow_large: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo checks of the concentration argument.
    Theory {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 60)]
        trials: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Full experiment from a config file, optionally with a gamma sweep.
    Experiment {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        /// Comma-separated seeds of the generalization study.
        #[arg(long)]
        generalization_seeds: Option<String>,
        /// Comma-separated gammas; runs the variable-media sweep instead.
        #[arg(long)]
        gamma_sweep: Option<String>,
        #[arg(long, default_value = "R5")]
        sweep_preconditioner: String,
    },
}

/// Config file plus overrides shared by the model-based subcommands.
#[derive(Args)]
struct ModelArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// `constant` or `marmousi`.
    #[arg(long)]
    medium: Option<String>,
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// `marmousi`, `layered`, or a grid file.
    #[arg(long)]
    reflectivity: Option<String>,
    /// Cache directory (defaults to PROBEKIT_CACHE).
    #[arg(long)]
    cache: Option<PathBuf>,
}

impl ModelArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::read(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(m) = &self.medium {
            cfg.medium.kind = match m.as_str() {
                "constant" => MediumKind::Constant,
                "marmousi" => MediumKind::Marmousi,
                other => return Err(Error::Config(format!("unknown medium `{other}`"))),
            };
        }
        if let Some(c) = self.speed {
            cfg.medium.speed = c;
        }
        if let Some(g) = self.gamma {
            cfg.medium.gamma = g;
            if self.medium.is_none() {
                cfg.medium.kind = MediumKind::Marmousi;
            }
        }
        if let Some(r) = &self.reflectivity {
            cfg.reflectivity = r.clone();
        }
        if let Some(c) = &self.cache {
            cfg.cache = Some(c.clone());
        }
        Ok(cfg)
    }

    fn problem(&self) -> Result<(ExperimentConfig, LinearizedProblem)> {
        let cfg = self.config()?;
        cfg.validate_survey()?;
        let (medium, _, acq) = harness::survey(&cfg)?;
        let prob = LinearizedProblem::with_cache(medium, acq, cfg.cache_dir().as_deref())?;
        Ok((cfg, prob))
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| Error::Config(format!("bad {what} `{t}`"))))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { model, out } => {
            let (cfg, prob) = model.problem()?;
            let truth = harness::load_reflectivity(&cfg)?;
            let d = prob.born_forward(&truth)?;
            write_shot(&out, &d)?;
            println!("wrote {} ({} sources, {} receivers, {} steps)", out.display(), d.ns, d.nr, d.nt);
        }
        Command::Migrate { model, data, out, pgm } => {
            let (_, prob) = model.problem()?;
            let img = prob.migrate(&read_shot(&data)?)?;
            write_grid(&out, &img)?;
            if let Some(p) = pgm {
                write_pgm(p, &img)?;
            }
            println!("wrote {}", out.display());
        }
        Command::Mask { model, out } => {
            let cfg = model.config()?;
            cfg.validate()?;
            let (_, speed, acq) = harness::survey(&cfg)?;
            let plan = CurveletPlan::new(cfg.n)?;
            let mask = harness::illumination_mask(&plan, &speed, &acq, cfg.cache_dir().as_deref())?;
            mask.write(&out)?;
            println!("visible atoms: {} of {}", mask.count(), mask.len());
        }
        Command::Fit { model, preconditioner, truncation, order, seed, out, stem } => {
            let mut cfg = model.config()?;
            let t: Vec<u32> = parse_list(&truncation, "truncation")?;
            let [l, q1, q2] = t[..] else {
                return Err(Error::Config(format!("truncation needs three values, got `{truncation}`")));
            };
            cfg.basis.truncations = vec![[l, q1, q2]];
            if let Some(o) = order {
                cfg.basis.order = o;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let pc: Preconditioner = preconditioner.parse()?;
            cfg.validate()?;
            let basis = PdoBasis::new(cfg.basis.specs(cfg.n)?.remove(0), cfg.n)?;
            let setup = harness::Setup::new(&cfg)?;
            let pairs: Vec<ProbePair> = match pc {
                Preconditioner::Random(k) => {
                    let ctx = TrialContext {
                        plan: Some(&setup.plan),
                        mask: Some(&setup.mask),
                        problem: Some(&setup.problem),
                        sigma: cfg.probing.sigma,
                    };
                    probing::probe(cfg.trial_kind()?, &ctx, &setup.problem, k, cfg.seed)?
                }
                Preconditioner::Krylov(k) => {
                    let d = setup.problem.born_forward(&harness::load_reflectivity(&cfg)?)?;
                    probing::krylov_trials(&setup.problem, &d, k)?
                }
            };
            let report = probing::fit(&pairs, &basis, FitOptions { tikhonov: cfg.probing.tikhonov })?;
            report.write(&out, &stem)?;
            print!("{}", report.to_text());
        }
        Command::Apply { fit, input, out, pgm } => {
            let op = FittedOperator::read(&fit)?;
            let img: ModelGrid = op.apply(&read_grid(&input)?)?;
            write_grid(&out, &img)?;
            if let Some(p) = pgm {
                write_pgm(p, &img)?;
            }
            println!("wrote {}", out.display());
        }
        Command::EpsRank { model, eps, allow_large, out } => {
            let (cfg, prob) = model.problem()?;
            let eps: Vec<f64> = parse_list(&eps, "eps")?;
            let table = harness::eps_rank_table(&prob, &eps, allow_large)?;
            let csv = harness::eps_rank_csv(&table, cfg.n);
            match out {
                Some(p) => fs::write(p, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Theory { out, samples, trials, seed } => {
            let opts = theory::SuiteOptions { samples, trials, seed, ..Default::default() };
            let r = theory::run_suite(&opts)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("theory_tail.csv"), r.tail_csv())?;
            fs::write(out.join("theory_sweep.csv"), r.sweep_csv())?;
            let (viol, checked) = r.explicit_violations();
            println!("tail bound holds: {}", r.tails_hold());
            println!("median deviation strictly decreasing: {}", r.sweep_strictly_decreasing());
            for row in &r.sweep {
                println!("  r={:5} median={:.4}", row.r, row.median());
            }
            println!("explicit-constant violations: {viol} over {checked} rows");
            println!("eigenvalue-margin failures: {}", r.margin_failures());
        }
        Command::Experiment { model, output, seed, steps, generalization_seeds, gamma_sweep, sweep_preconditioner } => {
            let mut cfg = model.config()?;
            if let Some(o) = output {
                cfg.output = o;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(s) = steps {
                cfg.reference.steps = s;
            }
            if let Some(g) = generalization_seeds {
                cfg.generalization.seeds = parse_list(&g, "seed")?;
            }
            if let Some(g) = gamma_sweep {
                let gammas: Vec<f64> = parse_list(&g, "gamma")?;
                let pc: Preconditioner = sweep_preconditioner.parse()?;
                cfg.validate()?;
                for r in harness::run_gamma_sweep(&cfg, &gammas, pc)? {
                    println!("gamma={} {} p={} mse_masked={:.4} mse={:.4}", r.gamma, r.label, r.p, r.mse_masked_reference, r.mse_reference);
                }
            } else {
                let r = harness::run_experiment(&cfg)?;
                for row in &r.rows {
                    println!(
                        "{:16} {:6} p={:4} mse_masked_ref={:.4} mse_ref={:.4} mse_masked_true={:.4}",
                        row.label, row.truncation, row.p, row.mse_masked_reference, row.mse_reference, row.mse_masked_true
                    );
                }
                for g in &r.generalization {
                    println!("generalization seed={} {} p={} mse={:.4}", g.seed, g.label, g.p, g.mse);
                }
                println!("outputs in {}", r.dir.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
