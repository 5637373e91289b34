//! Grid-convergence studies against manufactured solutions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::{bgs_solve, BgsConfig};
use crate::error::{Error, Result};
use crate::problems::boussinesq::{BoussinesqConfig, BoussinesqProblem};
use crate::problems::poisson::{PoissonConfig, PoissonProblem};

/// Problem family with its base configuration; the mesh size is overridden
/// per refinement level.
#[derive(Clone, Debug)]
pub enum MmsFamily {
    Poisson(PoissonConfig),
    Boussinesq(BoussinesqConfig),
}

impl MmsFamily {
    fn dims(&self) -> (usize, usize) {
        match self {
            Self::Poisson(c) => (c.s1, c.s2),
            Self::Boussinesq(c) => (c.s1, c.s2),
        }
    }

    /// Mesh spacing for `m` nodes (Poisson) or cells (Boussinesq) per side.
    pub fn spacing(&self, m: usize) -> f64 {
        match self {
            Self::Poisson(_) => 1.0 / (m - 1) as f64,
            Self::Boussinesq(_) => 1.0 / m as f64,
        }
    }
}

/// Mean error at one mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmsPoint {
    pub m: usize,
    pub spacing: f64,
    pub mean_error: f64,
    pub samples: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmsStudy {
    pub points: Vec<MmsPoint>,
    /// Least-squares slope of `log error` against `log spacing`.
    pub slope: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Error of one manufactured solve at `(xi1, xi2)`.
pub fn mms_sample(family: &MmsFamily, m: usize, xi1: &[f64], xi2: &[f64], bgs: &BgsConfig) -> Result<f64> {
    match family {
        MmsFamily::Poisson(base) => {
            let p = PoissonProblem::new(PoissonConfig {
                m,
                mms: true,
                ..base.clone()
            })?;
            let s = bgs_solve(&p.left, &p.right, xi1, xi2, None, bgs)?;
            Ok(p.mms_error(&s.u1, &s.u2))
        }
        MmsFamily::Boussinesq(base) => {
            let p = BoussinesqProblem::manufactured(BoussinesqConfig { m, ..base.clone() }, xi2)?;
            let s = bgs_solve(&p.flow, &p.heat, xi1, xi2, None, bgs)?;
            Ok(p.mms_error(&s.u1, &s.u2, xi2))
        }
    }
}

/// Mean manufactured-solution error over `samples` uniform parameter draws
/// at each mesh in `ms`. The same draws are used on every mesh. Samples whose
/// coupled solve fails are dropped with a warning as long as they stay below
/// 10% of the draws.
pub fn mms_convergence(family: &MmsFamily, ms: &[usize], samples: usize, seed: u64, bgs: &BgsConfig) -> Result<MmsStudy> {
    if ms.len() < 2 || samples == 0 {
        return Err(Error::InvalidArgument("need at least two meshes and one sample".into()));
    }
    let (s1, s2) = family.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..samples)
        .map(|_| {
            let a = (0..s1).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let b = (0..s2).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            (a, b)
        })
        .collect();
    let mut points = Vec::with_capacity(ms.len());
    for &m in ms {
        let mut errors = Vec::new();
        let mut failed = 0;
        for (xi1, xi2) in &draws {
            match mms_sample(family, m, xi1, xi2, bgs) {
                Ok(e) => errors.push(e),
                Err(e @ (Error::NoConvergence { .. } | Error::Divergence { .. })) => {
                    log::warn!("manufactured solve at m = {m} failed: {e}");
                    failed += 1;
                }
                Err(e) => return Err(e),
            }
        }
        if failed * 10 >= samples && failed > 0 {
            return Err(Error::Numerical(format!("{failed} of {samples} manufactured solves failed at m = {m}")));
        }
        points.push(MmsPoint {
            m,
            spacing: family.spacing(m),
            mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
            samples: errors.len(),
            failed,
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.spacing).collect();
    let y: Vec<f64> = points.iter().map(|p| p.mean_error).collect();
    Ok(MmsStudy {
        slope: loglog_slope(&x, &y),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [0.1, 0.05, 0.025];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((loglog_slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}
