//! Module operators and the relaxed block Gauss-Seidel driver for two
//! coupled solver components.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpc::Gramian;

/// One solver component of a two-module coupled system.
///
/// `solve` maps the module's current state, the partner's coupling vector
/// and the module's local random parameters to an updated state.
/// `interface` extracts the coupling vector this module hands to its
/// partner. Implementations are called concurrently for different
/// parameter values and must not keep mutable state.
pub trait ModuleOperator: Send + Sync {
    fn state_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn gramian(&self) -> &Gramian;
    fn solve(&self, own: &DVector<f64>, partner: &DVector<f64>, xi: &[f64]) -> Result<DVector<f64>>;

    fn interface(&self, u: &DVector<f64>) -> DVector<f64> {
        u.clone()
    }

    /// Starting state for the fixed-point iteration.
    fn initial_state(&self) -> DVector<f64> {
        DVector::zeros(self.state_dim())
    }
}

/// Relaxation, tolerance and iteration cap of the block Gauss-Seidel loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BgsConfig {
    pub relaxation: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for BgsConfig {
    fn default() -> Self {
        Self {
            relaxation: 0.9,
            tol: 1e-6,
            max_iters: 200,
        }
    }
}

impl BgsConfig {
    /// Defaults of the stochastic (coefficient-level) loop, which uses a
    /// tighter tolerance than the deterministic solver.
    pub fn stochastic() -> Self {
        Self {
            tol: 1e-8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::InvalidArgument(format!("relaxation {} not in (0, 1]", self.relaxation)));
        }
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidArgument("tolerance and max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of a converged block Gauss-Seidel solve.
#[derive(Clone, Debug)]
pub struct BgsSolution {
    pub u1: DVector<f64>,
    pub u2: DVector<f64>,
    pub iterations: usize,
    /// Relative G-weighted update norms `(module 1, module 2)` per iteration.
    pub history: Vec<(f64, f64)>,
}

/// `|new - old|_G / |new|_G`, with zero when both vanish.
pub fn relative_update(new: f64, diff: f64) -> f64 {
    if new > 0.0 {
        diff / new
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Relaxed block Gauss-Seidel: `u1 <- m1(u1, g2(u2))`, then
/// `u2 <- m2(u2, g1(u1))` with the fresh `u1`, each blended with the previous
/// iterate as `w * new + (1 - w) * old`.
pub fn bgs_solve(
    m1: &dyn ModuleOperator,
    m2: &dyn ModuleOperator,
    xi1: &[f64],
    xi2: &[f64],
    init: Option<(DVector<f64>, DVector<f64>)>,
    cfg: &BgsConfig,
) -> Result<BgsSolution> {
    cfg.validate()?;
    let (mut u1, mut u2) = init.unwrap_or_else(|| (m1.initial_state(), m2.initial_state()));
    if u1.len() != m1.state_dim() || u2.len() != m2.state_dim() {
        return Err(Error::InvalidArgument("initial state dimension mismatch".into()));
    }
    if xi1.len() != m1.param_dim() || xi2.len() != m2.param_dim() {
        return Err(Error::InvalidArgument("parameter dimension mismatch".into()));
    }
    let w = cfg.relaxation;
    let mut history = Vec::new();
    let mut last = f64::INFINITY;
    for it in 1..=cfg.max_iters {
        let new1 = m1.solve(&u1, &m2.interface(&u2), xi1)?;
        let new1 = relax(w, &new1, &u1);
        let d1 = relative_update(m1.gramian().norm(&new1), m1.gramian().norm(&(&new1 - &u1)));
        u1 = new1;
        let new2 = m2.solve(&u2, &m1.interface(&u1), xi2)?;
        let new2 = relax(w, &new2, &u2);
        let d2 = relative_update(m2.gramian().norm(&new2), m2.gramian().norm(&(&new2 - &u2)));
        u2 = new2;
        if !d1.is_finite() || !d2.is_finite() || u1.iter().chain(u2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: it,
                message: "non-finite state".into(),
            });
        }
        history.push((d1, d2));
        last = d1.max(d2);
        if d1 <= cfg.tol && d2 <= cfg.tol {
            return Ok(BgsSolution {
                u1,
                u2,
                iterations: it,
                history,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iters,
        last_update: last,
        last_state: Some(Box::new((u1.as_slice().to_vec(), u2.as_slice().to_vec()))),
    })
}

pub(crate) fn relax(w: f64, new: &DVector<f64>, old: &DVector<f64>) -> DVector<f64> {
    if w == 1.0 {
        new.clone()
    } else {
        new * w + old * (1.0 - w)
    }
}

/// Affine module `u <- A v + B xi + c` used for tests and synthetic problems.
#[derive(Clone, Debug)]
pub struct AffineModule {
    pub a: nalgebra::DMatrix<f64>,
    pub b: nalgebra::DMatrix<f64>,
    pub c: DVector<f64>,
    pub gramian: Gramian,
}

impl AffineModule {
    pub fn new(a: nalgebra::DMatrix<f64>, b: nalgebra::DMatrix<f64>, c: DVector<f64>) -> Self {
        let n = c.len();
        Self {
            a,
            b,
            c,
            gramian: Gramian::identity(n),
        }
    }
}

impl ModuleOperator for AffineModule {
    fn state_dim(&self) -> usize {
        self.c.len()
    }

    fn param_dim(&self) -> usize {
        self.b.ncols()
    }

    fn gramian(&self) -> &Gramian {
        &self.gramian
    }

    fn solve(&self, _own: &DVector<f64>, partner: &DVector<f64>, xi: &[f64]) -> Result<DVector<f64>> {
        Ok(&self.a * partner + &self.b * DVector::from_column_slice(xi) + &self.c)
    }
}
