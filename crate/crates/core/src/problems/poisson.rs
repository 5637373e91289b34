//! Stochastic Poisson equation `-div(a grad u) = b` on two unit squares
//! `[-1, 0] x [0, 1]` and `[0, 1] x [0, 1]` joined along `x1 = 0`, with
//! homogeneous Dirichlet data on the outer boundary. Each subdomain is
//! discretized with bilinear finite elements on `m x m` nodes. Module 1 takes
//! the interface trace from module 2 as Dirichlet data and returns its state
//! with the interface flux multiplier; module 2 takes the multiplier as a
//! Neumann load.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coupling::ModuleOperator;
use crate::error::{Error, Result};
use crate::gpc::Gramian;
use crate::linalg::BandedMatrix;
use crate::problems::kl::{KlField2d, KlSpec};

/// Parameters of the coupled Poisson problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoissonConfig {
    /// Nodes per side of each subdomain.
    pub m: usize,
    pub s1: usize,
    pub s2: usize,
    pub a1: KlSpec,
    pub a2: KlSpec,
    pub b1: f64,
    pub b2: f64,
    /// Replace the constant sources by manufactured-solution forcing.
    pub mms: bool,
}

impl Default for PoissonConfig {
    fn default() -> Self {
        Self {
            m: 11,
            s1: 3,
            s2: 3,
            a1: KlSpec {
                mean: 0.5,
                delta: 0.25,
                corr_len: 0.2,
            },
            a2: KlSpec {
                mean: 1.0,
                delta: 0.2,
                corr_len: 0.5,
            },
            b1: 4.0,
            b2: -4.0,
            mms: false,
        }
    }
}

/// Manufactured solution `cos(pi x1 / 2) sin(pi x2) / pi^2`.
pub fn poisson_exact(x: [f64; 2]) -> f64 {
    (PI * x[0] / 2.0).cos() * (PI * x[1]).sin() / (PI * PI)
}

fn mms_source(x: [f64; 2], a: f64, ax: f64, ay: f64) -> f64 {
    let (c1, s1) = ((PI * x[0] / 2.0).cos(), (PI * x[0] / 2.0).sin());
    let (c2, s2) = ((PI * x[1]).cos(), (PI * x[1]).sin());
    1.25 * a * c1 * s2 + ax / (2.0 * PI) * s1 * s2 - ay / PI * c1 * c2
}

const GAUSS: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// One subdomain with precomputed random-field modes at the element
/// quadrature points.
#[derive(Clone, Debug)]
struct Subdomain {
    m: usize,
    h: f64,
    x0: f64,
    field: KlField2d,
    /// Per quadrature point, `terms` values each of g, dg/dx1, dg/dx2.
    modes: Vec<[Vec<f64>; 3]>,
    points: Vec<[f64; 2]>,
    source: Option<f64>,
    mass: DMatrix<f64>,
    /// True for outer Dirichlet nodes.
    dirichlet: Vec<bool>,
    /// Interface column index.
    iface: usize,
}

fn shape(r: f64, s: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    (
        [
            (1.0 - r) * (1.0 - s) / 4.0,
            (1.0 + r) * (1.0 - s) / 4.0,
            (1.0 + r) * (1.0 + s) / 4.0,
            (1.0 - r) * (1.0 + s) / 4.0,
        ],
        [-(1.0 - s) / 4.0, (1.0 - s) / 4.0, (1.0 + s) / 4.0, -(1.0 + s) / 4.0],
        [-(1.0 - r) / 4.0, -(1.0 + r) / 4.0, (1.0 + r) / 4.0, (1.0 - r) / 4.0],
    )
}

impl Subdomain {
    fn new(m: usize, x0: f64, field: KlField2d, source: Option<f64>, dirichlet_col: usize, iface: usize) -> Self {
        let h = 1.0 / (m - 1) as f64;
        let mut modes = Vec::new();
        let mut points = Vec::new();
        for ej in 0..m - 1 {
            for ei in 0..m - 1 {
                for &s in &GAUSS {
                    for &r in &GAUSS {
                        let x = [x0 + (ei as f64 + 0.5 + r / 2.0) * h, (ej as f64 + 0.5 + s / 2.0) * h];
                        let t = field.terms();
                        modes.push([
                            (0..t).map(|k| field.mode(k, x, 0, 0)).collect(),
                            (0..t).map(|k| field.mode(k, x, 1, 0)).collect(),
                            (0..t).map(|k| field.mode(k, x, 0, 1)).collect(),
                        ]);
                        points.push(x);
                    }
                }
            }
        }
        let n = m * m;
        let mut dirichlet = vec![false; n];
        for j in 0..m {
            for i in 0..m {
                if i == dirichlet_col || j == 0 || j == m - 1 {
                    dirichlet[j * m + i] = true;
                }
            }
        }
        let mut sd = Self {
            m,
            h,
            x0,
            field,
            modes,
            points,
            source,
            mass: DMatrix::zeros(n, n),
            dirichlet,
            iface,
        };
        sd.mass = sd.assemble_mass();
        sd
    }

    fn node(&self, i: usize, j: usize) -> usize {
        j * self.m + i
    }

    fn element_nodes(&self, ei: usize, ej: usize) -> [usize; 4] {
        [
            self.node(ei, ej),
            self.node(ei + 1, ej),
            self.node(ei + 1, ej + 1),
            self.node(ei, ej + 1),
        ]
    }

    fn for_each_point(&self, mut f: impl FnMut(usize, [usize; 4], [f64; 4], [[f64; 4]; 2])) {
        let mut q = 0;
        let scale = 2.0 / self.h;
        for ej in 0..self.m - 1 {
            for ei in 0..self.m - 1 {
                let nodes = self.element_nodes(ei, ej);
                for &s in &GAUSS {
                    for &r in &GAUSS {
                        let (n, dr, ds) = shape(r, s);
                        let grad = [dr.map(|v| v * scale), ds.map(|v| v * scale)];
                        f(q, nodes, n, grad);
                        q += 1;
                    }
                }
            }
        }
    }

    fn assemble_mass(&self) -> DMatrix<f64> {
        let n = self.m * self.m;
        let wq = self.h * self.h / 4.0;
        let mut mass = DMatrix::zeros(n, n);
        self.for_each_point(|_, nodes, sh, _| {
            for p in 0..4 {
                for q in 0..4 {
                    mass[(nodes[p], nodes[q])] += sh[p] * sh[q] * wq;
                }
            }
        });
        mass
    }

    fn coefficient(&self, q: usize, xi: &[f64]) -> (f64, f64, f64) {
        let [g, gx, gy] = &self.modes[q];
        (
            self.field.spec.mean + self.field.combine(g, xi),
            self.field.combine(gx, xi),
            self.field.combine(gy, xi),
        )
    }

    /// Stiffness matrix and load vector without boundary conditions.
    fn assemble(&self, xi: &[f64]) -> Result<(BandedMatrix, Vec<f64>)> {
        let n = self.m * self.m;
        let bw = self.m + 1;
        let mut a = BandedMatrix::zeros(n, bw, bw);
        let mut b = vec![0.0; n];
        let wq = self.h * self.h / 4.0;
        let mut min_a = f64::INFINITY;
        self.for_each_point(|q, nodes, sh, grad| {
            let (coef, ax, ay) = self.coefficient(q, xi);
            min_a = min_a.min(coef);
            let f = match self.source {
                Some(v) => v,
                None => mms_source(self.points[q], coef, ax, ay),
            };
            for p in 0..4 {
                b[nodes[p]] += f * sh[p] * wq;
                for r in 0..4 {
                    let k = coef * (grad[0][p] * grad[0][r] + grad[1][p] * grad[1][r]) * wq;
                    a.add(nodes[p], nodes[r], k);
                }
            }
        });
        if !(min_a > 0.0) {
            return Err(Error::Numerical(format!(
                "diffusion coefficient {min_a:.3e} is not positive; the stiffness matrix is not definite"
            )));
        }
        Ok((a, b))
    }

    fn apply_dirichlet(&self, a: &mut BandedMatrix, b: &mut [f64]) {
        for (k, &d) in self.dirichlet.iter().enumerate() {
            if d {
                a.set_identity_row(k, 1.0);
                b[k] = 0.0;
            }
        }
    }

    fn interface_nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.m).map(move |j| (j, self.node(self.iface, j)))
    }

    fn node_coords(&self, k: usize) -> [f64; 2] {
        let (i, j) = (k % self.m, k / self.m);
        [self.x0 + i as f64 * self.h, j as f64 * self.h]
    }
}

/// Left subdomain: state `[u_1; lambda]`, interface output `lambda`.
#[derive(Clone, Debug)]
pub struct PoissonLeft {
    sd: Subdomain,
    s: usize,
    gramian: Gramian,
}

/// Right subdomain: state `u_2`, interface output its trace on `x1 = 0`.
#[derive(Clone, Debug)]
pub struct PoissonRight {
    sd: Subdomain,
    s: usize,
    gramian: Gramian,
}

fn check_xi(xi: &[f64], s: usize) -> Result<()> {
    if xi.len() != s {
        return Err(Error::InvalidArgument(format!("expected {s} parameters, got {}", xi.len())));
    }
    Ok(())
}

impl ModuleOperator for PoissonLeft {
    fn state_dim(&self) -> usize {
        self.sd.m * self.sd.m + self.sd.m
    }

    fn param_dim(&self) -> usize {
        self.s
    }

    fn gramian(&self) -> &Gramian {
        &self.gramian
    }

    fn solve(&self, _own: &DVector<f64>, partner: &DVector<f64>, xi: &[f64]) -> Result<DVector<f64>> {
        check_xi(xi, self.s)?;
        let sd = &self.sd;
        let m = sd.m;
        if partner.len() != m {
            return Err(Error::InvalidArgument(format!("interface trace has {} entries, expected {m}", partner.len())));
        }
        let (raw, b_raw) = sd.assemble(xi)?;
        let mut a = raw.clone();
        let mut b = b_raw.clone();
        sd.apply_dirichlet(&mut a, &mut b);
        for (j, k) in sd.interface_nodes() {
            if !sd.dirichlet[k] {
                a.set_identity_row(k, 1.0);
                b[k] = partner[j];
            }
        }
        let u = a.factor()?.solve(&b);
        let au = raw.mul_vec(&u);
        let mut out = DVector::zeros(m * m + m);
        out.rows_mut(0, m * m).copy_from_slice(&u);
        for (j, k) in sd.interface_nodes() {
            if !sd.dirichlet[k] {
                out[m * m + j] = b_raw[k] - au[k];
            }
        }
        Ok(out)
    }

    fn interface(&self, u: &DVector<f64>) -> DVector<f64> {
        let m = self.sd.m;
        u.rows(m * m, m).into_owned()
    }
}

impl ModuleOperator for PoissonRight {
    fn state_dim(&self) -> usize {
        self.sd.m * self.sd.m
    }

    fn param_dim(&self) -> usize {
        self.s
    }

    fn gramian(&self) -> &Gramian {
        &self.gramian
    }

    fn solve(&self, _own: &DVector<f64>, partner: &DVector<f64>, xi: &[f64]) -> Result<DVector<f64>> {
        check_xi(xi, self.s)?;
        let sd = &self.sd;
        if partner.len() != sd.m {
            return Err(Error::InvalidArgument(format!(
                "interface flux has {} entries, expected {}",
                partner.len(),
                sd.m
            )));
        }
        let (mut a, mut b) = sd.assemble(xi)?;
        for (j, k) in sd.interface_nodes() {
            b[k] += partner[j];
        }
        sd.apply_dirichlet(&mut a, &mut b);
        Ok(DVector::from_vec(a.factor()?.solve(&b)))
    }

    fn interface(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.sd.m, self.sd.interface_nodes().map(|(_, k)| u[k]))
    }
}

/// Assembled coupled Poisson problem.
#[derive(Clone, Debug)]
pub struct PoissonProblem {
    pub config: PoissonConfig,
    pub left: PoissonLeft,
    pub right: PoissonRight,
}

impl PoissonProblem {
    pub fn new(config: PoissonConfig) -> Result<Self> {
        if config.m < 3 {
            return Err(Error::InvalidArgument("Poisson mesh needs at least 3 nodes per side".into()));
        }
        let m = config.m;
        let f1 = KlField2d::new(config.a1, [-0.5, 0.5], config.s1)?;
        let f2 = KlField2d::new(config.a2, [0.5, 0.5], config.s2)?;
        let (src1, src2) = if config.mms { (None, None) } else { (Some(config.b1), Some(config.b2)) };
        let left_sd = Subdomain::new(m, -1.0, f1, src1, 0, m - 1);
        let right_sd = Subdomain::new(m, 0.0, f2, src2, m - 1, 0);
        let g1 = Gramian::block_diag(&[&Gramian::dense(left_sd.mass.clone())?, &Gramian::identity(m)])?;
        let g2 = Gramian::dense(right_sd.mass.clone())?;
        Ok(Self {
            left: PoissonLeft {
                sd: left_sd,
                s: config.s1,
                gramian: g1,
            },
            right: PoissonRight {
                sd: right_sd,
                s: config.s2,
                gramian: g2,
            },
            config,
        })
    }

    pub fn mass_left(&self) -> &DMatrix<f64> {
        &self.left.sd.mass
    }

    pub fn mass_right(&self) -> &DMatrix<f64> {
        &self.right.sd.mass
    }

    /// Nodal field of subdomain 1 from a module-1 state.
    pub fn left_field<'a>(&self, u1: &'a DVector<f64>) -> nalgebra::DVectorView<'a, f64> {
        let n = self.config.m * self.config.m;
        u1.rows(0, n)
    }

    /// `(u_1^T M_1 u_1 + u_2^T M_2 u_2) / 2`.
    pub fn energy(&self, u1: &DVector<f64>, u2: &DVector<f64>) -> f64 {
        let v1 = self.left_field(u1);
        0.5 * (v1.dot(&(self.mass_left() * v1)) + u2.dot(&(self.mass_right() * u2)))
    }

    /// Node coordinates of subdomain `k` (0 left, 1 right).
    pub fn coordinates(&self, k: usize) -> Vec<[f64; 2]> {
        let sd = if k == 0 { &self.left.sd } else { &self.right.sd };
        (0..sd.m * sd.m).map(|i| sd.node_coords(i)).collect()
    }

    /// Relative mass-weighted L2 error of the nodal fields against the
    /// manufactured solution.
    pub fn mms_error(&self, u1: &DVector<f64>, u2: &DVector<f64>) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, field) in [(0, self.left_field(u1).into_owned()), (1, u2.clone())] {
            let exact = DVector::from_iterator(field.len(), self.coordinates(k).into_iter().map(poisson_exact));
            let mass = if k == 0 { self.mass_left() } else { self.mass_right() };
            let e = &field - &exact;
            num += e.dot(&(mass * &e));
            den += exact.dot(&(mass * &exact));
        }
        (num / den).sqrt()
    }

    /// Single-domain solve on `[-1, 1] x [0, 1]` with the two coefficient
    /// fields, returning the nodal values restricted to each subdomain.
    pub fn monolithic(&self, xi1: &[f64], xi2: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        let m = self.config.m;
        let nx = 2 * m - 1;
        let n = nx * m;
        let glob = |sub: usize, k: usize| {
            let (i, j) = (k % m, k / m);
            j * nx + i + sub * (m - 1)
        };
        let mut a = BandedMatrix::zeros(n, nx + 1, nx + 1);
        let mut b = vec![0.0; n];
        for (sub, sd, xi) in [(0, &self.left.sd, xi1), (1, &self.right.sd, xi2)] {
            let (la, lb) = sd.assemble(xi)?;
            for r in 0..m * m {
                b[glob(sub, r)] += lb[r];
                let lo = r.saturating_sub(m + 1);
                let hi = (r + m + 2).min(m * m);
                for c in lo..hi {
                    let v = la.get(r, c);
                    if v != 0.0 {
                        a.add(glob(sub, r), glob(sub, c), v);
                    }
                }
            }
        }
        for j in 0..m {
            for i in 0..nx {
                if i == 0 || i == nx - 1 || j == 0 || j == m - 1 {
                    let k = j * nx + i;
                    a.set_identity_row(k, 1.0);
                    b[k] = 0.0;
                }
            }
        }
        let u = a.factor()?.solve(&b);
        let u1 = DVector::from_iterator(m * m, (0..m * m).map(|k| u[glob(0, k)]));
        let u2 = DVector::from_iterator(m * m, (0..m * m).map(|k| u[glob(1, k)]));
        Ok((u1, u2))
    }
}
