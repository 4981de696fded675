//! Experiment configuration, read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pdo::BasisSpec;
use crate::probing::TrialKind;

/// A preconditioner label: `R<n>` fits from `n` randomized trials, `K<n>`
/// from the first `n` Krylov vectors of the migrated image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preconditioner {
    Random(usize),
    Krylov(usize),
}

impl Preconditioner {
    pub fn count(self) -> usize {
        match self {
            Preconditioner::Random(k) | Preconditioner::Krylov(k) => k,
        }
    }
}

impl fmt::Display for Preconditioner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preconditioner::Random(k) => write!(f, "R{k}"),
            Preconditioner::Krylov(k) => write!(f, "K{k}"),
        }
    }
}

impl FromStr for Preconditioner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("preconditioner `{s}` is not of the form R<n> or K<n>"));
        let mut chars = s.chars();
        let head = chars.next().ok_or_else(bad)?;
        let k: usize = chars.as_str().parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        match head.to_ascii_uppercase() {
            'R' => Ok(Preconditioner::Random(k)),
            'K' => Ok(Preconditioner::Krylov(k)),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediumKind {
    Constant,
    Marmousi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediumConfig {
    pub kind: MediumKind,
    /// Wave speed of the constant medium.
    pub speed: f64,
    /// Smoothing parameter of the Marmousi blend, in `[0, 0.4]`.
    pub gamma: f64,
}

impl Default for MediumConfig {
    fn default() -> Self {
        MediumConfig { kind: MediumKind::Constant, speed: 1.0, gamma: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    /// Source positions along x, in `[0, 1)`.
    pub sources: Vec<f64>,
    /// Grid row of sources and receivers.
    pub depth: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig { sources: vec![0.1, 0.5, 0.9], depth: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub order: i32,
    /// `[lambda_max, q1_max, q2_max]` triples, one fit per entry.
    pub truncations: Vec<[u32; 3]>,
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig { order: -1, truncations: vec![[4, 2, 1]] }
    }
}

impl BasisConfig {
    pub fn specs(&self, n: usize) -> Result<Vec<BasisSpec>> {
        self.truncations.iter().map(|&[l, q1, q2]| BasisSpec::new(l, q1, q2, self.order, n)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbingConfig {
    pub preconditioners: Vec<String>,
    /// Trial kind behind the `R<n>` labels.
    pub trial_kind: String,
    pub sigma: f64,
    pub tikhonov: f64,
    /// Also fit against the true pair `(dm, H dm)`.
    pub true_fit: bool,
}

impl Default for ProbingConfig {
    fn default() -> Self {
        ProbingConfig {
            preconditioners: ["R1", "R4", "R7", "K1", "K4", "K7"].map(String::from).to_vec(),
            trial_kind: TrialKind::CurveletMasked.name().into(),
            sigma: 1.0,
            tikhonov: 1e-2,
            true_fit: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    pub steps: usize,
    pub power_iterations: usize,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig { steps: 200, power_iterations: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneralizationConfig {
    /// One study per seed; empty disables the study.
    pub seeds: Vec<u64>,
    pub preconditioners: Vec<String>,
}

impl Default for GeneralizationConfig {
    fn default() -> Self {
        GeneralizationConfig {
            seeds: Vec::new(),
            preconditioners: ["R1", "R4", "R7", "K1", "K4", "K7"].map(String::from).to_vec(),
        }
    }
}

/// Everything an experiment run depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub output: PathBuf,
    /// Wavefield and mask cache; `PROBEKIT_CACHE` is used when unset.
    pub cache: Option<PathBuf>,
    /// `marmousi`, `layered`, or a path to a PKGRID1 file.
    pub reflectivity: String,
    /// Seed of the randomized fitting trials.
    pub seed: u64,
    pub medium: MediumConfig,
    pub acquisition: AcquisitionConfig,
    pub basis: BasisConfig,
    pub probing: ProbingConfig,
    pub reference: ReferenceConfig,
    pub generalization: GeneralizationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 64,
            output: PathBuf::from("probekit-out"),
            cache: None,
            reflectivity: "marmousi".into(),
            seed: 1,
            medium: MediumConfig::default(),
            acquisition: AcquisitionConfig::default(),
            basis: BasisConfig::default(),
            probing: ProbingConfig::default(),
            reference: ReferenceConfig::default(),
            generalization: GeneralizationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML echo, hex. The output and cache
    /// locations do not affect results and are left out.
    pub fn hash_hex(&self) -> String {
        let c = ExperimentConfig { output: PathBuf::new(), cache: None, ..self.clone() };
        let d = Sha256::digest(c.to_toml().as_bytes());
        d.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Cache directory: the configured one, else `PROBEKIT_CACHE`.
    pub fn cache_dir(&self) -> Option<PathBuf> {
        self.cache.clone().or_else(|| std::env::var_os("PROBEKIT_CACHE").map(PathBuf::from))
    }

    pub fn preconditioners(&self) -> Result<Vec<Preconditioner>> {
        self.probing.preconditioners.iter().map(|s| s.parse()).collect()
    }

    pub fn generalization_preconditioners(&self) -> Result<Vec<Preconditioner>> {
        self.generalization.preconditioners.iter().map(|s| s.parse()).collect()
    }

    pub fn trial_kind(&self) -> Result<TrialKind> {
        self.probing.trial_kind.parse()
    }

    /// Checks ranges and references; every failure is a config error.
    pub fn validate(&self) -> Result<()> {
        if self.n < 32 || !self.n.is_power_of_two() {
            return Err(Error::Config(format!("n must be a power of two >= 32, got {}", self.n)));
        }
        self.validate_survey()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.basis.truncations.is_empty() {
            return bad("basis needs at least one truncation".into());
        }
        self.basis.specs(self.n).map_err(|e| Error::Config(e.to_string()))?;
        if self.preconditioners()?.is_empty() {
            return bad("no preconditioners requested".into());
        }
        self.generalization_preconditioners()?;
        self.trial_kind()?;
        if self.reference.steps == 0 || self.reference.power_iterations == 0 {
            return bad("reference needs at least one step and one power iteration".into());
        }
        if !(self.probing.sigma > 0.0) || !(self.probing.tikhonov >= 0.0) {
            return bad("sigma must be positive and tikhonov non-negative".into());
        }
        Ok(())
    }

    /// The part of [`validate`](Self::validate) that wave modeling alone
    /// needs. Any even `n >= 16` is accepted here.
    pub fn validate_survey(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 16 || self.n % 2 != 0 {
            return bad(format!("n must be even and >= 16, got {}", self.n));
        }
        if !(0.0..=0.4).contains(&self.medium.gamma) {
            return bad(format!("gamma {} outside [0, 0.4]", self.medium.gamma));
        }
        if self.medium.kind == MediumKind::Constant && !(self.medium.speed > 0.0) {
            return bad(format!("constant speed must be positive, got {}", self.medium.speed));
        }
        if self.acquisition.sources.is_empty() || self.acquisition.sources.iter().any(|x| !(0.0..1.0).contains(x)) {
            return bad("source positions must be nonempty and in [0, 1)".into());
        }
        if self.acquisition.depth >= self.n {
            return bad(format!("acquisition depth {} outside the grid", self.acquisition.depth));
        }
        if !matches!(self.reflectivity.as_str(), "marmousi" | "layered") && !Path::new(&self.reflectivity).is_file() {
            return bad(format!("reflectivity file `{}` does not exist", self.reflectivity));
        }
        Ok(())
    }
}
