//! Run configuration: a TOML file with flag overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::RuleKind;
use crate::coupling::BgsConfig;
use crate::error::{Error, Result};
use crate::nisp::ReducedConfig;
use crate::problems::boussinesq::BoussinesqConfig;
use crate::problems::mms::MmsFamily;
use crate::problems::poisson::PoissonConfig;
use crate::problems::Problem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Poisson,
    Boussinesq,
    MmsPoisson,
    MmsBoussinesq,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Standard,
    Reduced,
    Both,
}

impl MethodChoice {
    pub fn standard(self) -> bool {
        matches!(self, Self::Standard | Self::Both)
    }

    pub fn reduced(self) -> bool {
        matches!(self, Self::Reduced | Self::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionSection {
    pub eps_dim: [f64; 2],
    pub eps_ord: [f64; 2],
    pub stall_window: usize,
    pub stall_factor: f64,
}

impl Default for ReductionSection {
    fn default() -> Self {
        let r = ReducedConfig::default();
        Self {
            eps_dim: r.eps_dim,
            eps_ord: r.eps_ord,
            stall_window: r.stall_window,
            stall_factor: r.stall_factor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BgsSection {
    pub relaxation: f64,
    /// Deterministic coupled-solve tolerance.
    pub tol: f64,
    /// Coefficient-loop tolerance of the NISP drivers.
    pub stochastic_tol: f64,
    pub max_iters: usize,
}

impl Default for BgsSection {
    fn default() -> Self {
        let d = BgsConfig::default();
        Self {
            relaxation: d.relaxation,
            tol: d.tol,
            stochastic_tol: BgsConfig::stochastic().tol,
            max_iters: d.max_iters,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Mesh sizes; defaults depend on the problem family.
    pub meshes: Option<Vec<usize>>,
    pub samples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// Values of `s1 = s2`.
    pub s: Vec<usize>,
    pub p: Vec<usize>,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            s: vec![3],
            p: vec![2, 3, 4],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub method: MethodChoice,
    pub s1: usize,
    pub s2: usize,
    pub p: usize,
    /// Quadrature level; defaults to `p`.
    pub q: Option<usize>,
    pub rule: RuleKind,
    /// Mesh size; defaults to the problem's own default.
    pub m: Option<usize>,
    pub seed: u64,
    pub kde_samples: usize,
    pub kde_points: usize,
    /// Worker threads; 0 uses all logical cores.
    pub threads: usize,
    pub out: PathBuf,
    /// Compute the standard NISP reference of order `p + 1` for error columns.
    pub reference: bool,
    pub reduction: ReductionSection,
    pub bgs: BgsSection,
    pub verify: VerifySection,
    pub bench: BenchSection,
    pub poisson: PoissonConfig,
    pub boussinesq: BoussinesqConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Poisson,
            method: MethodChoice::Both,
            s1: 3,
            s2: 3,
            p: 2,
            q: None,
            rule: RuleKind::Smolyak,
            m: None,
            seed: 42,
            kde_samples: 10_000,
            kde_points: 200,
            threads: 0,
            out: PathBuf::from("out"),
            reference: true,
            reduction: ReductionSection::default(),
            bgs: BgsSection::default(),
            verify: VerifySection::default(),
            bench: BenchSection::default(),
            poisson: PoissonConfig::default(),
            boussinesq: BoussinesqConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML file. A missing or unreadable file is an I/O error.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn level(&self) -> usize {
        self.q.unwrap_or(self.p)
    }

    pub fn bgs_config(&self) -> BgsConfig {
        BgsConfig {
            relaxation: self.bgs.relaxation,
            tol: self.bgs.tol,
            max_iters: self.bgs.max_iters,
        }
    }

    pub fn stochastic_config(&self) -> BgsConfig {
        BgsConfig {
            tol: self.bgs.stochastic_tol,
            ..self.bgs_config()
        }
    }

    pub fn reduced_config(&self) -> ReducedConfig {
        ReducedConfig {
            eps_dim: self.reduction.eps_dim,
            eps_ord: self.reduction.eps_ord,
            stall_window: self.reduction.stall_window,
            stall_factor: self.reduction.stall_factor,
            ..ReducedConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.level() < self.p {
            return Err(Error::InvalidArgument(format!(
                "quadrature level q = {} is below the order p = {}",
                self.level(),
                self.p
            )));
        }
        self.reduced_config().validate()?;
        self.bgs_config().validate()?;
        self.stochastic_config().validate()?;
        if self.problem == ProblemKind::Custom && self.s1 != self.s2 {
            return Err(Error::InvalidArgument("the custom problem needs s1 = s2".into()));
        }
        if self.kde_samples < 2 {
            return Err(Error::InvalidArgument("kde_samples must be at least 2".into()));
        }
        Ok(())
    }

    pub fn poisson_config(&self, s1: usize, s2: usize) -> PoissonConfig {
        PoissonConfig {
            m: self.m.unwrap_or(self.poisson.m),
            s1,
            s2,
            mms: self.poisson.mms || self.problem == ProblemKind::MmsPoisson,
            ..self.poisson.clone()
        }
    }

    pub fn boussinesq_config(&self, s1: usize, s2: usize) -> BoussinesqConfig {
        BoussinesqConfig {
            m: self.m.unwrap_or(self.boussinesq.m),
            s1,
            s2,
            ..self.boussinesq.clone()
        }
    }

    /// The configured problem with `s1`, `s2` parameters. The manufactured
    /// Boussinesq variant fixes its hot-wall draw at zero.
    pub fn build_problem(&self, s1: usize, s2: usize) -> Result<Problem> {
        match self.problem {
            ProblemKind::Poisson | ProblemKind::MmsPoisson => Problem::poisson(self.poisson_config(s1, s2)),
            ProblemKind::Boussinesq => Problem::boussinesq(self.boussinesq_config(s1, s2)),
            ProblemKind::MmsBoussinesq => Ok(Problem::Boussinesq(
                crate::problems::boussinesq::BoussinesqProblem::manufactured(
                    self.boussinesq_config(s1, s2),
                    &vec![0.0; s2],
                )?,
            )),
            ProblemKind::Custom => {
                if s1 != s2 {
                    return Err(Error::InvalidArgument("the custom problem needs s1 = s2".into()));
                }
                Problem::synthetic(s1, self.seed)
            }
        }
    }

    /// Family, meshes and sample count of the verification study.
    pub fn mms_setup(&self) -> Result<(MmsFamily, Vec<usize>, usize)> {
        let (family, meshes, samples) = match self.problem {
            ProblemKind::Poisson | ProblemKind::MmsPoisson => (
                MmsFamily::Poisson(self.poisson_config(self.s1, self.s2)),
                vec![11, 21, 41],
                10,
            ),
            ProblemKind::Boussinesq | ProblemKind::MmsBoussinesq => (
                MmsFamily::Boussinesq(self.boussinesq_config(self.s1, self.s2)),
                vec![8, 16, 32],
                5,
            ),
            ProblemKind::Custom => {
                return Err(Error::InvalidArgument("the custom problem has no manufactured solution".into()))
            }
        };
        Ok((
            family,
            self.verify.meshes.clone().unwrap_or(meshes),
            self.verify.samples.unwrap_or(samples),
        ))
    }
}
