//! Benchmark coupled problems.

pub mod boussinesq;
pub mod kl;
pub mod mms;
pub mod poisson;
pub mod synthetic;

use nalgebra::DVector;

use crate::coupling::ModuleOperator;
use crate::error::{Error, Result};
use boussinesq::{BoussinesqConfig, BoussinesqProblem};
use poisson::{PoissonConfig, PoissonProblem};
use synthetic::QuadraticSourceModule;

/// A contiguous block of one module's state holding one scalar field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldBlock {
    /// 1 or 2.
    pub module: usize,
    pub name: &'static str,
    pub offset: usize,
    pub len: usize,
    /// Point of each entry, when the block lives on a grid.
    pub coords: Option<Vec<[f64; 2]>>,
}

/// A coupled problem ready for propagation.
#[derive(Clone, Debug)]
pub enum Problem {
    Poisson(PoissonProblem),
    Boussinesq(BoussinesqProblem),
    Synthetic(QuadraticSourceModule, QuadraticSourceModule),
}

impl Problem {
    pub fn poisson(config: PoissonConfig) -> Result<Self> {
        Ok(Self::Poisson(PoissonProblem::new(config)?))
    }

    pub fn boussinesq(config: BoussinesqConfig) -> Result<Self> {
        Ok(Self::Boussinesq(BoussinesqProblem::new(config)?))
    }

    /// Synthetic pair with `s` parameters per module.
    pub fn synthetic(s: usize, seed: u64) -> Result<Self> {
        if s == 0 {
            return Err(Error::InvalidArgument("synthetic problem needs at least one parameter".into()));
        }
        let (a, b) = synthetic::synthetic_pair(s, seed);
        Ok(Self::Synthetic(a, b))
    }

    pub fn modules(&self) -> (&dyn ModuleOperator, &dyn ModuleOperator) {
        match self {
            Self::Poisson(p) => (&p.left, &p.right),
            Self::Boussinesq(p) => (&p.flow, &p.heat),
            Self::Synthetic(a, b) => (a, b),
        }
    }

    pub fn param_dims(&self) -> (usize, usize) {
        let (a, b) = self.modules();
        (a.param_dim(), b.param_dim())
    }

    pub fn qoi_names(&self) -> &'static [&'static str] {
        match self {
            Self::Boussinesq(_) => &["K", "E"],
            _ => &["E"],
        }
    }

    /// Quantities of interest of a coupled state, in `qoi_names` order.
    /// The synthetic problem reports `E = (|u1|^2 + |u2|^2) / 2`.
    pub fn qoi(&self, u1: &DVector<f64>, u2: &DVector<f64>) -> Vec<f64> {
        match self {
            Self::Poisson(p) => vec![p.energy(u1, u2)],
            Self::Boussinesq(p) => {
                let (k, e) = p.qoi(u1, u2);
                vec![k, e]
            }
            Self::Synthetic(..) => vec![0.5 * (u1.norm_squared() + u2.norm_squared())],
        }
    }

    /// Scalar fields stored in the module states.
    pub fn fields(&self) -> Vec<FieldBlock> {
        match self {
            Self::Poisson(p) => {
                let n = p.config.m * p.config.m;
                vec![
                    FieldBlock {
                        module: 1,
                        name: "u",
                        offset: 0,
                        len: n,
                        coords: Some(p.coordinates(0)),
                    },
                    FieldBlock {
                        module: 1,
                        name: "lambda",
                        offset: n,
                        len: p.config.m,
                        coords: None,
                    },
                    FieldBlock {
                        module: 2,
                        name: "u",
                        offset: 0,
                        len: n,
                        coords: Some(p.coordinates(1)),
                    },
                ]
            }
            Self::Boussinesq(p) => {
                let n = p.config.m * p.config.m;
                let xy = p.coordinates();
                let block = |module, name, k: usize| FieldBlock {
                    module,
                    name,
                    offset: k * n,
                    len: n,
                    coords: Some(xy.clone()),
                };
                vec![block(1, "u", 0), block(1, "v", 1), block(1, "p", 2), block(2, "T", 0)]
            }
            Self::Synthetic(a, b) => [(1, a.c.len()), (2, b.c.len())]
                .into_iter()
                .map(|(module, len)| FieldBlock {
                    module,
                    name: "u",
                    offset: 0,
                    len,
                    coords: None,
                })
                .collect(),
        }
    }
}
