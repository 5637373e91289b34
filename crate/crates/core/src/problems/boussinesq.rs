//! Stochastic natural convection in the unit cavity: steady incompressible
//! Boussinesq flow with a random Rayleigh number field and a randomly
//! perturbed hot-wall temperature.
//!
//! Cell-centered finite volumes on an `m x m` collocated grid with central
//! differences and ghost cells. Velocity vanishes on the walls, the left wall
//! is held at `T_h(x2) = 1 + h(x2) sin^2(pi x2)`, the right wall at zero and
//! the horizontal walls are adiabatic. Mass conservation uses momentum
//! interpolated face fluxes with one pinned pressure cell.
//!
//! Module 1 performs one Newton update of `[u; v; p]` given the temperature,
//! module 2 one Newton update of `T` given the velocity. State arrays are
//! stored with cell index `i * m + j`, `i` along `x1`.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::coupling::ModuleOperator;
use crate::error::{Error, Result};
use crate::gpc::Gramian;
use crate::linalg::BandedMatrix;
use crate::problems::kl::{KlField1d, KlField2d, KlSpec};

/// Parameters of the Boussinesq problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoussinesqConfig {
    /// Cells per side.
    pub m: usize,
    pub s1: usize,
    pub s2: usize,
    pub prandtl: f64,
    pub rayleigh: KlSpec,
    pub hot_wall: KlSpec,
}

impl Default for BoussinesqConfig {
    fn default() -> Self {
        Self {
            m: 16,
            s1: 3,
            s2: 3,
            prandtl: 0.71,
            rayleigh: KlSpec {
                mean: 1000.0,
                delta: 200.0,
                corr_len: 0.5,
            },
            hot_wall: KlSpec {
                mean: 0.0,
                delta: 0.5,
                corr_len: 0.5,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Ghost {
    /// Zero wall value: ghost = -interior.
    Wall,
    /// Zero normal derivative: ghost = interior.
    Neumann,
    /// Hot left wall, cold right wall, adiabatic top and bottom.
    Temperature,
}

/// Affine combination of unknowns `c + sum coef * x[col]`.
#[derive(Clone, Debug, Default)]
struct Lin {
    terms: Vec<(usize, f64)>,
    c: f64,
}

impl Lin {
    fn eval(&self, x: &[f64]) -> f64 {
        self.c + self.terms.iter().map(|&(k, a)| a * x[k]).sum::<f64>()
    }

    fn axpy(&mut self, a: f64, other: &Lin) {
        self.c += a * other.c;
        self.terms.extend(other.terms.iter().map(|&(k, b)| (k, a * b)));
    }

    fn scaled(mut self, a: f64) -> Lin {
        self.c *= a;
        for t in &mut self.terms {
            t.1 *= a;
        }
        self
    }
}

/// Precomputed manufactured-solution data for one `(xi1, xi2)` draw.
#[derive(Clone, Debug)]
struct Manufactured {
    xi2: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Grid {
    m: usize,
    h: f64,
    centers: Vec<f64>,
}

impl Grid {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.m + j
    }

    /// Value at the neighbor of cell `(i, j)` in direction `(di, dj)` as a
    /// linear form in the unknowns, `col(cell)` giving the column.
    fn neighbor(&self, g: Ghost, wall: &[f64], i: usize, j: usize, di: isize, dj: isize, col: &impl Fn(usize) -> usize) -> Lin {
        let ii = i as isize + di;
        let jj = j as isize + dj;
        let m = self.m as isize;
        let p = col(self.idx(i, j));
        if (0..m).contains(&ii) && (0..m).contains(&jj) {
            return Lin {
                terms: vec![(col(self.idx(ii as usize, jj as usize)), 1.0)],
                c: 0.0,
            };
        }
        let (a, c) = match g {
            Ghost::Wall => (-1.0, 0.0),
            Ghost::Neumann => (1.0, 0.0),
            Ghost::Temperature => {
                if ii < 0 {
                    (-1.0, 2.0 * wall[j])
                } else if ii >= m {
                    (-1.0, 0.0)
                } else {
                    (1.0, 0.0)
                }
            }
        };
        Lin { terms: vec![(p, a)], c }
    }

    /// Central first derivatives and five-point Laplacian at `(i, j)`.
    fn ops(&self, g: Ghost, wall: &[f64], i: usize, j: usize, col: &impl Fn(usize) -> usize) -> [Lin; 3] {
        let h = self.h;
        let e = self.neighbor(g, wall, i, j, 1, 0, col);
        let w = self.neighbor(g, wall, i, j, -1, 0, col);
        let n = self.neighbor(g, wall, i, j, 0, 1, col);
        let s = self.neighbor(g, wall, i, j, 0, -1, col);
        let mut dx = Lin::default();
        dx.axpy(0.5 / h, &e);
        dx.axpy(-0.5 / h, &w);
        let mut dy = Lin::default();
        dy.axpy(0.5 / h, &n);
        dy.axpy(-0.5 / h, &s);
        let mut lap = Lin::default();
        for nb in [&e, &w, &n, &s] {
            lap.axpy(1.0 / (h * h), nb);
        }
        lap.terms.push((col(self.idx(i, j)), -4.0 / (h * h)));
        [dx, dy, lap]
    }
}

/// Module 1: momentum and mass conservation.
#[derive(Clone, Debug)]
pub struct BoussinesqFlow {
    grid: Grid,
    s: usize,
    prandtl: f64,
    rayleigh: KlField2d,
    /// Per cell, the `s1` Rayleigh mode values.
    ra_modes: Vec<Vec<f64>>,
    hot: KlField1d,
    mms: Option<Manufactured>,
    gramian: Gramian,
}

/// Module 2: energy transport.
#[derive(Clone, Debug)]
pub struct BoussinesqHeat {
    grid: Grid,
    s: usize,
    hot: KlField1d,
    mms: bool,
    gramian: Gramian,
}

/// Hot-wall temperature and its first two derivatives at `x2`.
fn hot_wall(field: &KlField1d, x: f64, xi: &[f64]) -> [f64; 3] {
    let h = [field.eval(x, xi, 0), field.eval(x, xi, 1), field.eval(x, xi, 2)];
    let s = (PI * x).sin().powi(2);
    let s1 = PI * (2.0 * PI * x).sin();
    let s2 = 2.0 * PI * PI * (2.0 * PI * x).cos();
    [1.0 + h[0] * s, h[1] * s + h[0] * s1, h[2] * s + 2.0 * h[1] * s1 + h[0] * s2]
}

/// Manufactured velocity, pressure and temperature at `x`.
pub fn boussinesq_exact(x: [f64; 2], th: f64) -> [f64; 4] {
    let (sx, cx) = (PI * x[0]).sin_cos();
    let (sy, cy) = (PI * x[1]).sin_cos();
    [
        -sx * sx * (2.0 * PI * x[1]).sin(),
        (2.0 * PI * x[0]).sin() * sy * sy,
        cx * cy,
        (PI * x[0] / 2.0).cos() * th,
    ]
}

fn check_xi(xi: &[f64], s: usize) -> Result<()> {
    if xi.len() != s {
        return Err(Error::InvalidArgument(format!("expected {s} parameters, got {}", xi.len())));
    }
    Ok(())
}

impl BoussinesqFlow {
    fn rayleigh_at(&self, c: usize, xi: &[f64]) -> f64 {
        self.rayleigh.spec.mean + self.rayleigh.combine(&self.ra_modes[c], xi)
    }

    /// Momentum forcing `(f_u, f_v)` at cell `(i, j)`.
    fn forcing(&self, i: usize, j: usize, ra: f64, th: &[[f64; 3]]) -> (f64, f64) {
        if self.mms.is_none() {
            return (0.0, 0.0);
        }
        let x = [self.grid.centers[i], self.grid.centers[j]];
        let pr = self.prandtl;
        let (sx, cx) = (PI * x[0]).sin_cos();
        let (sy, cy) = (PI * x[1]).sin_cos();
        let t = (PI * x[0] / 2.0).cos() * th[j][0];
        let fu = PI * sx * cy - 4.0 * PI * sx.powi(3) * cx * sy * sy + 4.0 * PI * PI * pr * sy * cy * (4.0 * sx * sx - 1.0);
        let fv = pr * ra * t + PI * cx * sy - 4.0 * PI * sx * sx * sy.powi(3) * cy
            + 4.0 * PI * PI * pr * sx * cx * (1.0 - 4.0 * sy * sy);
        (fu, fv)
    }

    fn pressure_pin(&self, th: &[[f64; 3]]) -> f64 {
        match self.mms {
            Some(_) => boussinesq_exact([self.grid.centers[0], self.grid.centers[0]], th[0][0])[2],
            None => 0.0,
        }
    }

    /// Face flux between cell `(i, j)` and its `+x1` (`dir = 0`) or `+x2`
    /// neighbor, in interleaved columns.
    fn face_flux(&self, i: usize, j: usize, dir: usize) -> Lin {
        let g = &self.grid;
        let h = g.h;
        let d = h * h / (4.0 * self.prandtl);
        let (i2, j2) = if dir == 0 { (i + 1, j) } else { (i, j + 1) };
        let vel = |c: usize| 3 * c + dir;
        let pc = |c: usize| 3 * c + 2;
        let (a, b) = (g.idx(i, j), g.idx(i2, j2));
        let grad = |ci: usize, cj: usize| {
            let (di, dj) = if dir == 0 { (1, 0) } else { (0, 1) };
            let mut l = Lin::default();
            l.axpy(0.5 / h, &g.neighbor(Ghost::Neumann, &[], ci, cj, di, dj, &pc));
            l.axpy(-0.5 / h, &g.neighbor(Ghost::Neumann, &[], ci, cj, -di, -dj, &pc));
            l
        };
        let mut f = Lin {
            terms: vec![(vel(a), 0.5), (vel(b), 0.5), (pc(b), -d / h), (pc(a), d / h)],
            c: 0.0,
        };
        f.axpy(0.5 * d, &grad(i, j));
        f.axpy(0.5 * d, &grad(i2, j2));
        f
    }

    /// Residual and Jacobian of the flow equations in interleaved unknowns
    /// `x[3 c + k]`, `k = 0, 1, 2` for `u, v, p`.
    fn residual(&self, x: &[f64], t: &[f64], xi: &[f64], th: &[[f64; 3]], jac: Option<&mut BandedMatrix>) -> Vec<f64> {
        let g = &self.grid;
        let m = g.m;
        let pr = self.prandtl;
        let mut r = vec![0.0; 3 * m * m];
        let mut rows: Vec<(usize, Lin)> = Vec::new();
        let mut jac = jac;
        for i in 0..m {
            for j in 0..m {
                let c = g.idx(i, j);
                let ra = self.rayleigh_at(c, xi);
                let (fu, fv) = self.forcing(i, j, ra, th);
                let [px, py, _] = g.ops(Ghost::Neumann, &[], i, j, &|k| 3 * k + 2);
                let (up, vp) = (x[3 * c], x[3 * c + 1]);
                for comp in 0..2 {
                    let [dx, dy, lap] = g.ops(Ghost::Wall, &[], i, j, &|k| 3 * k + comp);
                    let (dxv, dyv) = (dx.eval(x), dy.eval(x));
                    let (dp, f) = if comp == 0 { (&px, fu) } else { (&py, fv - pr * ra * t[c]) };
                    let row = 3 * c + comp;
                    r[row] = up * dxv + vp * dyv + dp.eval(x) - pr * lap.eval(x) + f;
                    if let Some(jm) = jac.as_deref_mut() {
                        jm.add(row, 3 * c, dxv);
                        jm.add(row, 3 * c + 1, dyv);
                        for &(k, a) in &dx.terms {
                            jm.add(row, k, up * a);
                        }
                        for &(k, a) in &dy.terms {
                            jm.add(row, k, vp * a);
                        }
                        for &(k, a) in &lap.terms {
                            jm.add(row, k, -pr * a);
                        }
                        for &(k, a) in &dp.terms {
                            jm.add(row, k, a);
                        }
                    }
                }
                let row = 3 * c + 2;
                if c == 0 {
                    rows.push((
                        row,
                        Lin {
                            terms: vec![(2, 1.0)],
                            c: -self.pressure_pin(th),
                        },
                    ));
                    continue;
                }
                let mut div = Lin::default();
                if i + 1 < m {
                    div.axpy(1.0, &self.face_flux(i, j, 0));
                }
                if i > 0 {
                    div.axpy(-1.0, &self.face_flux(i - 1, j, 0));
                }
                if j + 1 < m {
                    div.axpy(1.0, &self.face_flux(i, j, 1));
                }
                if j > 0 {
                    div.axpy(-1.0, &self.face_flux(i, j - 1, 1));
                }
                rows.push((row, div.scaled(1.0 / g.h)));
            }
        }
        for (row, lin) in rows {
            r[row] = lin.eval(x);
            if let Some(jm) = jac.as_deref_mut() {
                for &(k, a) in &lin.terms {
                    jm.add(row, k, a);
                }
            }
        }
        r
    }

    fn hot_profile(&self, xi2: Option<&[f64]>) -> Vec<[f64; 3]> {
        match xi2 {
            Some(xi) => self.grid.centers.iter().map(|&y| hot_wall(&self.hot, y, xi)).collect(),
            None => vec![[0.0; 3]; self.grid.m],
        }
    }

    fn bandwidth(&self) -> usize {
        6 * self.grid.m + 5
    }

    fn to_interleaved(&self, own: &DVector<f64>) -> Vec<f64> {
        let n = self.grid.m * self.grid.m;
        let mut x = vec![0.0; 3 * n];
        for c in 0..n {
            for k in 0..3 {
                x[3 * c + k] = own[k * n + c];
            }
        }
        x
    }

    /// Residual norm of the mass-conservation rows at a flow state.
    pub fn continuity_residual(&self, own: &DVector<f64>, xi: &[f64]) -> Result<f64> {
        check_xi(xi, self.s)?;
        let n = self.grid.m * self.grid.m;
        let x = self.to_interleaved(own);
        let th = self.hot_profile(self.mms.as_ref().map(|m| m.xi2.as_slice()));
        let r = self.residual(&x, &vec![0.0; n], xi, &th, None);
        Ok((0..n).map(|c| r[3 * c + 2].powi(2)).sum::<f64>().sqrt())
    }
}

impl ModuleOperator for BoussinesqFlow {
    fn state_dim(&self) -> usize {
        3 * self.grid.m * self.grid.m
    }

    fn param_dim(&self) -> usize {
        self.s
    }

    fn gramian(&self) -> &Gramian {
        &self.gramian
    }

    fn solve(&self, own: &DVector<f64>, partner: &DVector<f64>, xi: &[f64]) -> Result<DVector<f64>> {
        check_xi(xi, self.s)?;
        let n = self.grid.m * self.grid.m;
        if partner.len() != n || own.len() != 3 * n {
            return Err(Error::InvalidArgument("flow module state dimension mismatch".into()));
        }
        let x = self.to_interleaved(own);
        let th = self.hot_profile(self.mms.as_ref().map(|m| m.xi2.as_slice()));
        let bw = self.bandwidth();
        let mut jac = BandedMatrix::zeros(3 * n, bw, bw);
        let r = self.residual(&x, partner.as_slice(), xi, &th, Some(&mut jac));
        let dx = jac.factor()?.solve(&r);
        let mut out = DVector::zeros(3 * n);
        for c in 0..n {
            for k in 0..3 {
                out[k * n + c] = x[3 * c + k] - dx[3 * c + k];
            }
        }
        Ok(out)
    }

    fn interface(&self, u: &DVector<f64>) -> DVector<f64> {
        let n = self.grid.m * self.grid.m;
        u.rows(0, 2 * n).into_owned()
    }
}

impl BoussinesqHeat {
    fn residual(&self, t: &[f64], vel: &[f64], xi: &[f64], jac: Option<&mut BandedMatrix>) -> Vec<f64> {
        let g = &self.grid;
        let m = g.m;
        let n = m * m;
        let th: Vec<[f64; 3]> = g.centers.iter().map(|&y| hot_wall(&self.hot, y, xi)).collect();
        let wall: Vec<f64> = th.iter().map(|v| v[0]).collect();
        let mut r = vec![0.0; n];
        let mut jac = jac;
        for i in 0..m {
            for j in 0..m {
                let c = g.idx(i, j);
                let [dx, dy, lap] = g.ops(Ghost::Temperature, &wall, i, j, &|k| k);
                let (up, vp) = (vel[c], vel[n + c]);
                let f = if self.mms {
                    let x1 = g.centers[i];
                    let y = g.centers[j];
                    let (s1, c1) = (PI * x1).sin_cos();
                    let (sh, ch) = (PI * x1 / 2.0).sin_cos();
                    let sy = (PI * y).sin();
                    -PI / 2.0 * s1 * s1 * (2.0 * PI * y).sin() * sh * th[j][0] - PI * PI / 4.0 * ch * th[j][0]
                        - 2.0 * s1 * c1 * sy * sy * ch * th[j][1]
                        + ch * th[j][2]
                } else {
                    0.0
                };
                r[c] = up * dx.eval(t) + vp * dy.eval(t) - lap.eval(t) + f;
                if let Some(jm) = jac.as_deref_mut() {
                    for &(k, a) in &dx.terms {
                        jm.add(c, k, up * a);
                    }
                    for &(k, a) in &dy.terms {
                        jm.add(c, k, vp * a);
                    }
                    for &(k, a) in &lap.terms {
                        jm.add(c, k, -a);
                    }
                }
            }
        }
        r
    }
}

impl ModuleOperator for BoussinesqHeat {
    fn state_dim(&self) -> usize {
        self.grid.m * self.grid.m
    }

    fn param_dim(&self) -> usize {
        self.s
    }

    fn gramian(&self) -> &Gramian {
        &self.gramian
    }

    fn solve(&self, own: &DVector<f64>, partner: &DVector<f64>, xi: &[f64]) -> Result<DVector<f64>> {
        check_xi(xi, self.s)?;
        let m = self.grid.m;
        let n = m * m;
        if partner.len() != 2 * n || own.len() != n {
            return Err(Error::InvalidArgument("heat module state dimension mismatch".into()));
        }
        let mut jac = BandedMatrix::zeros(n, m, m);
        let r = self.residual(own.as_slice(), partner.as_slice(), xi, Some(&mut jac));
        let dt = jac.factor()?.solve(&r);
        Ok(DVector::from_iterator(n, (0..n).map(|c| own[c] - dt[c])))
    }

    /// Pure conduction profile `1 - x1`.
    fn initial_state(&self) -> DVector<f64> {
        let g = &self.grid;
        DVector::from_iterator(g.m * g.m, (0..g.m * g.m).map(|c| 1.0 - g.centers[c / g.m]))
    }
}

/// Assembled Boussinesq problem.
#[derive(Clone, Debug)]
pub struct BoussinesqProblem {
    pub config: BoussinesqConfig,
    pub flow: BoussinesqFlow,
    pub heat: BoussinesqHeat,
}

impl BoussinesqProblem {
    pub fn new(config: BoussinesqConfig) -> Result<Self> {
        Self::build(config, None)
    }

    /// Manufactured-solution variant. The flow forcing contains the exact
    /// temperature, which depends on the hot-wall parameters, so the draw
    /// `xi2` used for the heat module is fixed here.
    pub fn manufactured(config: BoussinesqConfig, xi2: &[f64]) -> Result<Self> {
        check_xi(xi2, config.s2)?;
        Self::build(config, Some(xi2.to_vec()))
    }

    fn build(config: BoussinesqConfig, mms: Option<Vec<f64>>) -> Result<Self> {
        let m = config.m;
        if m < 3 {
            return Err(Error::InvalidArgument("Boussinesq grid needs at least 3 cells per side".into()));
        }
        if !(config.prandtl > 0.0) {
            return Err(Error::InvalidArgument("Prandtl number must be positive".into()));
        }
        let h = 1.0 / m as f64;
        let grid = Grid {
            m,
            h,
            centers: (0..m).map(|i| (i as f64 + 0.5) * h).collect(),
        };
        let rayleigh = KlField2d::new(config.rayleigh, [0.5, 0.5], config.s1)?;
        let hot = KlField1d::new(config.hot_wall, 0.5, config.s2)?;
        let ra_modes = (0..m * m)
            .map(|c| {
                let x = [grid.centers[c / m], grid.centers[c % m]];
                (0..config.s1).map(|k| rayleigh.mode(k, x, 0, 0)).collect()
            })
            .collect();
        let cell = h * h;
        let flow = BoussinesqFlow {
            grid: grid.clone(),
            s: config.s1,
            prandtl: config.prandtl,
            rayleigh,
            ra_modes,
            hot: hot.clone(),
            mms: mms.clone().map(|xi2| Manufactured { xi2 }),
            gramian: Gramian::diagonal(DVector::from_element(3 * m * m, cell))?,
        };
        let heat = BoussinesqHeat {
            grid,
            s: config.s2,
            hot,
            mms: mms.is_some(),
            gramian: Gramian::diagonal(DVector::from_element(m * m, cell))?,
        };
        Ok(Self { config, flow, heat })
    }

    /// Cell-center coordinates in state order.
    pub fn coordinates(&self) -> Vec<[f64; 2]> {
        let g = &self.flow.grid;
        (0..g.m * g.m).map(|c| [g.centers[c / g.m], g.centers[c % g.m]]).collect()
    }

    /// `(K, E)`: half the velocity L2 norm squared and the mean temperature.
    pub fn qoi(&self, flow: &DVector<f64>, t: &DVector<f64>) -> (f64, f64) {
        let n = self.config.m * self.config.m;
        let cell = self.flow.grid.h.powi(2);
        let k = 0.5 * flow.rows(0, 2 * n).norm_squared() * cell;
        (k, t.sum() * cell)
    }

    /// Relative discrete L2 error of `(u, v, p, T)` against the manufactured
    /// solution for hot-wall parameters `xi2`.
    pub fn mms_error(&self, flow: &DVector<f64>, t: &DVector<f64>, xi2: &[f64]) -> f64 {
        let n = self.config.m * self.config.m;
        let mut num = 0.0;
        let mut den = 0.0;
        for (c, x) in self.coordinates().into_iter().enumerate() {
            let th = hot_wall(&self.heat.hot, x[1], xi2)[0];
            let e = boussinesq_exact(x, th);
            let got = [flow[c], flow[n + c], flow[2 * n + c], t[c]];
            for k in 0..4 {
                num += (got[k] - e[k]).powi(2);
                den += e[k] * e[k];
            }
        }
        (num / den).sqrt()
    }

    /// Exact manufactured state `([u; v; p], T)` at the cell centers.
    pub fn mms_state(&self, xi2: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let n = self.config.m * self.config.m;
        let mut flow = DVector::zeros(3 * n);
        let mut t = DVector::zeros(n);
        for (c, x) in self.coordinates().into_iter().enumerate() {
            let th = hot_wall(&self.heat.hot, x[1], xi2)[0];
            let e = boussinesq_exact(x, th);
            flow[c] = e[0];
            flow[n + c] = e[1];
            flow[2 * n + c] = e[2];
            t[c] = e[3];
        }
        (flow, t)
    }
}
