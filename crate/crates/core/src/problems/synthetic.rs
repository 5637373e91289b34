//! Small coupled problem with linear coupling and a quadratic parameter
//! dependence, used to compare the two NISP drivers.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coupling::ModuleOperator;
use crate::error::{Error, Result};
use crate::gpc::Gramian;

/// `u <- A v + B xi + C (xi .* xi) + c`.
#[derive(Clone, Debug)]
pub struct QuadraticSourceModule {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub c: DVector<f64>,
    gramian: Gramian,
}

impl ModuleOperator for QuadraticSourceModule {
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
        if xi.len() != self.param_dim() || partner.len() != self.a.ncols() {
            return Err(Error::InvalidArgument("synthetic module dimension mismatch".into()));
        }
        let x = DVector::from_column_slice(xi);
        let x2 = x.component_mul(&x);
        Ok(&self.a * partner + &self.b * x + &self.c2 * x2 + &self.c)
    }
}

fn random_module(rng: &mut ChaCha8Rng, n: usize, partner: usize, s: usize, coupling: f64) -> QuadraticSourceModule {
    let mut mat = |r: usize, c: usize, scale: f64| DMatrix::from_fn(r, c, |_, _| scale * rng.gen_range(-1.0..1.0));
    let mut a = mat(n, partner, 1.0);
    let norm = a.norm();
    if norm > 0.0 {
        a *= coupling / norm;
    }
    let b = mat(n, s, 1.0);
    let c2 = mat(n, s, 0.3);
    let c = mat(n, 1, 1.0).column(0).into_owned() + DVector::from_element(n, 2.0);
    QuadraticSourceModule {
        a,
        b,
        c2,
        c,
        gramian: Gramian::identity(n),
    }
}

/// Two modules of sizes 3 and 4 with `s` parameters each and coupling
/// matrices of Frobenius norm 0.5, so the block Gauss-Seidel map contracts.
pub fn synthetic_pair(s: usize, seed: u64) -> (QuadraticSourceModule, QuadraticSourceModule) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m1 = random_module(&mut rng, 3, 4, s, 0.5);
    let m2 = random_module(&mut rng, 4, 3, s, 0.5);
    (m1, m2)
}
