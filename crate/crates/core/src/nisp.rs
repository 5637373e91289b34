//! Standard and reduced NISP drivers for two-module coupled systems.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{binomial, quadrature, QuadratureRule, RuleKind, TotalDegreeBasis};
use crate::coupling::{bgs_solve, relative_update, BgsConfig, ModuleOperator};
use crate::error::{Error, Result};
use crate::gpc::{project_with, weighted_frobenius, CoeffMatrix, Gramian};
use crate::reduction::{
    build_hankel, dimension_reduce, lift_to_global, optimal_quadrature, reduced_basis, reduced_project, select_order,
    stack_inputs, KlReduction, ReductionTolerances, SparseQuadrature,
};

/// Global basis, quadrature rule and basis values at the nodes. The global
/// parameter vector is `[xi_1; xi_2]` with `s1 + s2` coordinates.
#[derive(Clone, Debug)]
pub struct NispSetup {
    pub basis: TotalDegreeBasis,
    pub rule: QuadratureRule,
    /// `(P+1) x Q`.
    pub psi: DMatrix<f64>,
    pub s1: usize,
    pub s2: usize,
}

impl NispSetup {
    pub fn new(s1: usize, s2: usize, p: usize, rule: QuadratureRule) -> Result<Self> {
        if s1 + s2 == 0 {
            return Err(Error::InvalidArgument("at least one random parameter is required".into()));
        }
        if rule.dim != s1 + s2 {
            return Err(Error::InvalidArgument(format!(
                "rule dimension {} does not match s1 + s2 = {}",
                rule.dim,
                s1 + s2
            )));
        }
        if rule.level < p {
            return Err(Error::InvalidArgument(format!(
                "quadrature level {} below basis order {p}",
                rule.level
            )));
        }
        let basis = TotalDegreeBasis::new(s1 + s2, p)?;
        let psi = basis.eval_matrix(&rule);
        Ok(Self {
            basis,
            rule,
            psi,
            s1,
            s2,
        })
    }

    /// Setup with a freshly built rule of the given family and level.
    pub fn with_level(s1: usize, s2: usize, p: usize, q: usize, kind: RuleKind) -> Result<Self> {
        Self::new(s1, s2, p, quadrature(kind, s1 + s2, q)?)
    }

    pub fn nodes(&self) -> usize {
        self.rule.len()
    }

    /// Local parameters of module `module` (0 or 1) at node `j`.
    pub fn local_xi(&self, module: usize, j: usize) -> &[f64] {
        let dim = self.rule.dim;
        let all = &self.rule.nodes.as_slice()[j * dim..(j + 1) * dim];
        if module == 0 {
            &all[..self.s1]
        } else {
            &all[self.s1..self.s1 + self.s2]
        }
    }

    fn param_range(&self, module: usize) -> (usize, usize) {
        if module == 0 {
            (0, self.s1)
        } else {
            (self.s1, self.s2)
        }
    }
}

/// gPC matrix of the local parameters of module `module`: the projection of
/// the coordinate functions `xi_k` onto the global basis.
pub fn input_gpc(setup: &NispSetup, module: usize) -> Result<DMatrix<f64>> {
    let (off, count) = setup.param_range(module);
    let samples = setup.rule.nodes.rows(off, count).into_owned();
    project_with(&samples, &setup.rule.weights, &setup.psi)
}

/// Tolerances of the reduced driver, indexed by module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedConfig {
    pub eps_dim: [f64; 2],
    pub eps_ord: [f64; 2],
    pub tolerances: ReductionTolerances,
    /// Directory for per-iteration JSON dumps of the reductions.
    pub dump_dir: Option<PathBuf>,
    /// Iterations without a new smallest update after which the loop is
    /// treated as settled at the truncation noise level; 0 disables.
    pub stall_window: usize,
    /// A settled loop counts as converged only if its smallest update is
    /// within this factor of the stopping floor.
    pub stall_factor: f64,
}

impl Default for ReducedConfig {
    fn default() -> Self {
        Self {
            eps_dim: [1e-4, 1e-5],
            eps_ord: [1e-3, 1e-3],
            tolerances: ReductionTolerances::default(),
            dump_dir: None,
            stall_window: 5,
            stall_factor: 100.0,
        }
    }
}

impl ReducedConfig {
    pub fn validate(&self) -> Result<()> {
        for e in self.eps_dim.iter().chain(self.eps_ord.iter()) {
            if !(*e > 0.0 && *e < 1.0) {
                return Err(Error::InvalidArgument(format!("reduction tolerance {e} not in (0, 1)")));
            }
        }
        if !(self.stall_factor >= 1.0) {
            return Err(Error::InvalidArgument("stall_factor must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Standard,
    Reduced,
}

/// Coefficient matrix in a serializable row-major form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredCoeff {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub data: Vec<f64>,
}

impl From<&CoeffMatrix> for StoredCoeff {
    fn from(c: &CoeffMatrix) -> Self {
        Self {
            n: c.nrows(),
            p: c.p,
            s: c.s,
            data: c.data.transpose().as_slice().to_vec(),
        }
    }
}

impl StoredCoeff {
    pub fn to_coeff(&self) -> Result<CoeffMatrix> {
        let terms = binomial(self.p + self.s, self.s)
            .ok_or_else(|| Error::Format("basis size overflows".into()))?;
        if self.data.len() != self.n * terms {
            return Err(Error::Format(format!(
                "{} coefficients stored, expected {}",
                self.data.len(),
                self.n * terms
            )));
        }
        let basis = TotalDegreeBasis::new(self.s, self.p)?;
        CoeffMatrix::new(DMatrix::from_row_slice(self.n, terms, &self.data), &basis)
    }
}

/// One module update within a stochastic iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostic {
    pub iter: usize,
    /// 1 or 2.
    pub module: usize,
    /// Reduced dimension; 0 for standard NISP.
    pub d: usize,
    pub p_tilde: usize,
    /// Module evaluations in this update.
    pub q_tilde: usize,
    pub update_norm: f64,
    /// Relative KL tail of the stacked input.
    pub dim_tail: f64,
    /// Relative gap between the order-p~ and order-(p~+1) lifts.
    pub order_gap: f64,
    pub degenerate: bool,
    pub uncompressed: bool,
    pub moment_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationReport {
    pub method: Method,
    pub p: usize,
    pub s1: usize,
    pub s2: usize,
    pub rule_kind: RuleKind,
    pub rule_level: usize,
    pub rule_nodes: usize,
    pub u1: StoredCoeff,
    pub u2: StoredCoeff,
    pub iterations: usize,
    pub converged: bool,
    /// Reduced loop stopped on a plateau of its updates rather than on the
    /// floor.
    #[serde(default)]
    pub stalled: bool,
    pub module_calls: [usize; 2],
    pub wall_time: f64,
    pub diagnostics: Vec<IterationDiagnostic>,
}

impl PropagationReport {
    pub fn coefficients(&self) -> Result<(CoeffMatrix, CoeffMatrix)> {
        Ok((self.u1.to_coeff()?, self.u2.to_coeff()?))
    }

    pub fn total_calls(&self) -> usize {
        self.module_calls[0] + self.module_calls[1]
    }

    /// Diagnostics of the last update of module `module` (1 or 2).
    pub fn last_diagnostic(&self, module: usize) -> Option<&IterationDiagnostic> {
        self.diagnostics.iter().rev().find(|d| d.module == module)
    }

    /// `iter, module, d, p_tilde, Q_tilde, update_norm` rows.
    pub fn write_diagnostics_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["iter", "module", "d", "p_tilde", "Q_tilde", "update_norm"])
            .map_err(crate::basis::csv_err)?;
        for d in &self.diagnostics {
            wr.write_record(&[
                d.iter.to_string(),
                d.module.to_string(),
                d.d.to_string(),
                d.p_tilde.to_string(),
                d.q_tilde.to_string(),
                format!("{:.6e}", d.update_norm),
            ])
            .map_err(crate::basis::csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Initial coefficients: the deterministic coupled solution at `xi = 0` in
/// column 0.
pub fn deterministic_init(
    m1: &dyn ModuleOperator,
    m2: &dyn ModuleOperator,
    setup: &NispSetup,
    cfg: &BgsConfig,
) -> Result<(CoeffMatrix, CoeffMatrix)> {
    let sol = bgs_solve(m1, m2, &vec![0.0; setup.s1], &vec![0.0; setup.s2], None, cfg)
        .map_err(Error::stage("deterministic initialization"))?;
    Ok((
        CoeffMatrix::from_mean(&sol.u1, &setup.basis),
        CoeffMatrix::from_mean(&sol.u2, &setup.basis),
    ))
}

/// Zero coefficients apart from each module's initial state in column 0.
pub fn seed_init(m1: &dyn ModuleOperator, m2: &dyn ModuleOperator, setup: &NispSetup) -> (CoeffMatrix, CoeffMatrix) {
    (
        CoeffMatrix::from_mean(&m1.initial_state(), &setup.basis),
        CoeffMatrix::from_mean(&m2.initial_state(), &setup.basis),
    )
}

fn check_module(m: &dyn ModuleOperator, c: &CoeffMatrix, s: usize, setup: &NispSetup, which: usize) -> Result<()> {
    if m.param_dim() != s {
        return Err(Error::InvalidArgument(format!(
            "module {which} takes {} parameters, setup assigns {s}",
            m.param_dim()
        )));
    }
    if c.nrows() != m.state_dim() || c.terms() != setup.basis.len() {
        return Err(Error::InvalidArgument(format!("initial coefficients of module {which} have the wrong shape")));
    }
    Ok(())
}

/// Runs `f` for each index in parallel and gathers the results as columns.
fn evaluate_columns<F>(count: usize, rows: usize, f: F) -> Result<DMatrix<f64>>
where
    F: Fn(usize) -> Result<DVector<f64>> + Sync,
{
    let cols: Vec<Result<DVector<f64>>> = (0..count).into_par_iter().map(&f).collect();
    let mut out = DMatrix::zeros(rows, count);
    for (k, c) in cols.into_iter().enumerate() {
        let c = c?;
        if c.len() != rows {
            return Err(Error::InvalidArgument(format!(
                "module returned {} entries, expected {rows}",
                c.len()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite module output at evaluation {k}")));
        }
        out.set_column(k, &c);
    }
    Ok(out)
}

fn node_error(node: usize, xi: &[f64]) -> impl FnOnce(Error) -> Error + '_ {
    move |e| Error::Node {
        node,
        xi: xi.to_vec(),
        source: Box::new(e),
    }
}

fn relaxed(w: f64, new: DMatrix<f64>, old: &DMatrix<f64>) -> DMatrix<f64> {
    if w == 1.0 {
        new
    } else {
        new * w + old * (1.0 - w)
    }
}

fn change(new: &DMatrix<f64>, old: &DMatrix<f64>, g: &Gramian) -> f64 {
    relative_update(weighted_frobenius(new, g), weighted_frobenius(&(new - old), g))
}

fn check_finite(it: usize, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            iteration: it,
            message: "non-finite gPC coefficients".into(),
        });
    }
    Ok(())
}

struct Loop<'a> {
    m: [&'a dyn ModuleOperator; 2],
    setup: &'a NispSetup,
}

impl Loop<'_> {
    fn report(
        &self,
        method: Method,
        u: [DMatrix<f64>; 2],
        iterations: usize,
        converged: bool,
        module_calls: [usize; 2],
        start: Instant,
        diagnostics: Vec<IterationDiagnostic>,
    ) -> Result<PropagationReport> {
        let [a, b] = u;
        let c1 = CoeffMatrix::new(a, &self.setup.basis)?;
        let c2 = CoeffMatrix::new(b, &self.setup.basis)?;
        Ok(PropagationReport {
            method,
            p: self.setup.basis.p,
            s1: self.setup.s1,
            s2: self.setup.s2,
            rule_kind: self.setup.rule.kind,
            rule_level: self.setup.rule.level,
            rule_nodes: self.setup.nodes(),
            u1: (&c1).into(),
            u2: (&c2).into(),
            iterations,
            converged,
            stalled: false,
            module_calls,
            wall_time: start.elapsed().as_secs_f64(),
            diagnostics,
        })
    }
}

/// Standard NISP: every module update evaluates the module at all global
/// nodes with surrogate inputs and projects the results.
pub fn standard_nisp(
    m1: &dyn ModuleOperator,
    m2: &dyn ModuleOperator,
    setup: &NispSetup,
    init: (CoeffMatrix, CoeffMatrix),
    cfg: &BgsConfig,
) -> Result<PropagationReport> {
    cfg.validate()?;
    check_module(m1, &init.0, setup.s1, setup, 1)?;
    check_module(m2, &init.1, setup.s2, setup, 2)?;
    let start = Instant::now();
    let lp = Loop {
        m: [m1, m2],
        setup,
    };
    let q = setup.nodes();
    let mut u = [init.0.data, init.1.data];
    let mut calls = [0usize; 2];
    let mut diags = Vec::new();
    for it in 1..=cfg.max_iters {
        let mut updates = [0.0; 2];
        for i in 0..2 {
            let (me, other) = (lp.m[i], lp.m[1 - i]);
            let own = &u[i] * &setup.psi;
            let partner = &u[1 - i] * &setup.psi;
            let samples = evaluate_columns(q, me.state_dim(), |j| {
                let xi = setup.local_xi(i, j);
                let v = other.interface(&partner.column(j).into_owned());
                me.solve(&own.column(j).into_owned(), &v, xi)
                    .map_err(node_error(j, setup.rule.nodes.column(j).as_slice()))
            })?;
            calls[i] += q;
            let proj = project_with(&samples, &setup.rule.weights, &setup.psi)?;
            let new = relaxed(cfg.relaxation, proj, &u[i]);
            check_finite(it, &new)?;
            updates[i] = change(&new, &u[i], me.gramian());
            u[i] = new;
            diags.push(IterationDiagnostic {
                iter: it,
                module: i + 1,
                d: 0,
                p_tilde: setup.basis.p,
                q_tilde: q,
                update_norm: updates[i],
                dim_tail: 0.0,
                order_gap: 0.0,
                degenerate: false,
                uncompressed: true,
                moment_residual: 0.0,
            });
        }
        log::debug!("standard NISP iteration {it}: updates {:.3e} {:.3e}", updates[0], updates[1]);
        if updates[0] <= cfg.tol && updates[1] <= cfg.tol {
            return lp.report(Method::Standard, u, it, true, calls, start, diags);
        }
    }
    log::warn!("standard NISP did not converge in {} iterations", cfg.max_iters);
    lp.report(Method::Standard, u, cfg.max_iters, false, calls, start, diags)
}

/// Outcome of one reduced module update.
struct ReducedStep {
    committed: DMatrix<f64>,
    p_tilde: usize,
    diag: IterationDiagnostic,
    kl: KlReduction,
    sq: Option<SparseQuadrature>,
}

#[allow(clippy::too_many_arguments)]
fn reduced_step(
    setup: &NispSetup,
    me: &dyn ModuleOperator,
    other: &dyn ModuleOperator,
    own: &DMatrix<f64>,
    partner: &DMatrix<f64>,
    params: &DMatrix<f64>,
    p_tilde: usize,
    eps_dim: f64,
    eps_ord: f64,
    tol: &ReductionTolerances,
) -> Result<ReducedStep> {
    let q = setup.nodes();
    let w = &setup.rule.weights;
    let stack = stack_inputs(own, partner, params, me.gramian(), other.gramian()).map_err(Error::stage("stack"))?;
    let kl = dimension_reduce(&stack, eps_dim, tol).map_err(Error::stage("dimension reduction"))?;
    let solve_at = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let (o, pa, xi) = kl.split(z);
        me.solve(&o, &other.interface(&pa), xi.as_slice())
    };
    let mut diag = IterationDiagnostic {
        iter: 0,
        module: 0,
        d: kl.d,
        p_tilde,
        q_tilde: 0,
        update_norm: 0.0,
        dim_tail: kl.tail_ratio(),
        order_gap: 0.0,
        degenerate: kl.degenerate,
        uncompressed: false,
        moment_residual: 0.0,
    };
    if kl.degenerate {
        let u = solve_at(&kl.mean).map_err(Error::stage("deterministic module solve"))?;
        let mut committed = DMatrix::zeros(u.len(), setup.basis.len());
        committed.set_column(0, &u);
        diag.q_tilde = 1;
        return Ok(ReducedStep {
            committed,
            p_tilde,
            diag,
            kl,
            sq: None,
        });
    }
    let theta = &kl.theta * &setup.psi;
    let degree = 2 * (p_tilde + 1);
    // With at least as many moment conditions as nodes no compression is
    // possible, so skip the extraction and keep the full rule.
    let monomials = binomial(degree + kl.d, kl.d).unwrap_or(usize::MAX);
    let sq = if monomials >= q {
        SparseQuadrature {
            active: (0..q).collect(),
            weights: w.clone(),
            rank: q,
            degree,
            moment_residual: 0.0,
            uncompressed: true,
        }
    } else {
        optimal_quadrature(&theta, w, degree, tol.qr_rank).map_err(Error::stage("sparse quadrature"))?
    };
    let samples = evaluate_columns(sq.active.len(), me.state_dim(), |k| {
        let j = sq.active[k];
        solve_at(&kl.input_at(theta.column(j).as_slice()))
            .map_err(node_error(j, setup.rule.nodes.column(j).as_slice()))
    })?;
    // A basis with at least as many monomials as nodes spans every function
    // on the nodes, and its lift is the plain projection of the samples.
    let full = if sq.uncompressed {
        Some(project_with(&samples, w, &setup.psi)?)
    } else {
        None
    };
    let lift = |order: usize| -> Result<DMatrix<f64>> {
        let count = binomial(order + kl.d, kl.d).unwrap_or(usize::MAX);
        if let (Some(f), true) = (&full, count >= q) {
            return Ok(f.clone());
        }
        let rb = build_hankel(&theta, w, order)
            .and_then(|h| reduced_basis(&h, &theta, order, tol.hankel_rank))
            .map_err(Error::stage("reduced basis"))?;
        let c = reduced_project(&samples, &sq, &rb)?;
        lift_to_global(&c, &rb.node_evals, w, &setup.psi)
    };
    let lifted_lo = lift(p_tilde)?;
    let lifted_hi = lift(p_tilde + 1)?;
    let g = me.gramian();
    let next = select_order(p_tilde, &lifted_lo, &lifted_hi, g, eps_ord, setup.basis.p);
    diag.order_gap = relative_update(
        weighted_frobenius(&lifted_hi, g),
        weighted_frobenius(&(&lifted_hi - &lifted_lo), g),
    );
    diag.q_tilde = sq.active.len();
    diag.uncompressed = sq.uncompressed;
    diag.moment_residual = sq.moment_residual;
    Ok(ReducedStep {
        committed: lifted_lo,
        p_tilde: next,
        diag,
        kl,
        sq: Some(sq),
    })
}

fn dump_step(dir: &std::path::Path, it: usize, module: usize, step: &ReducedStep) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let kl = serde_json::to_string_pretty(&step.kl.dump()).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(dir.join(format!("kl_{it:03}_{module}.json")), kl)?;
    if let Some(sq) = &step.sq {
        let s = serde_json::to_string_pretty(sq).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(dir.join(format!("quadrature_{it:03}_{module}.json")), s)?;
    }
    Ok(())
}

/// Reduced NISP: each module update reduces its stacked input by a truncated
/// KL expansion, builds bases and a sparse rule on the reduced variables,
/// evaluates the module only at the retained nodes, and lifts the result
/// back to the global basis. The order-p~ lift is committed, after which p~
/// may be raised for the next iteration.
pub fn reduced_nisp(
    m1: &dyn ModuleOperator,
    m2: &dyn ModuleOperator,
    setup: &NispSetup,
    init: (CoeffMatrix, CoeffMatrix),
    cfg: &BgsConfig,
    rcfg: &ReducedConfig,
) -> Result<PropagationReport> {
    cfg.validate()?;
    rcfg.validate()?;
    check_module(m1, &init.0, setup.s1, setup, 1)?;
    check_module(m2, &init.1, setup.s2, setup, 2)?;
    let start = Instant::now();
    let lp = Loop {
        m: [m1, m2],
        setup,
    };
    let params = [input_gpc(setup, 0)?, input_gpc(setup, 1)?];
    let mut u = [init.0.data, init.1.data];
    let mut p_tilde = [0usize; 2];
    let mut calls = [0usize; 2];
    let mut diags = Vec::new();
    let floor = [cfg.tol.max(rcfg.eps_dim[0]), cfg.tol.max(rcfg.eps_dim[1])];
    let (mut best, mut best_at) = (f64::INFINITY, 0usize);
    for it in 1..=cfg.max_iters {
        let mut updates = [0.0; 2];
        let mut order_changed = false;
        for i in 0..2 {
            let (me, other) = (lp.m[i], lp.m[1 - i]);
            let step = reduced_step(
                setup,
                me,
                other,
                &u[i],
                &u[1 - i],
                &params[i],
                p_tilde[i],
                rcfg.eps_dim[i],
                rcfg.eps_ord[i],
                &rcfg.tolerances,
            )
            .map_err(|e| match e {
                Error::Stage { .. } | Error::Node { .. } => e,
                other => Error::Stage {
                    stage: if i == 0 { "module 1 update" } else { "module 2 update" },
                    source: Box::new(other),
                },
            })?;
            if let Some(dir) = &rcfg.dump_dir {
                dump_step(dir, it, i + 1, &step)?;
            }
            calls[i] += step.diag.q_tilde;
            let new = relaxed(cfg.relaxation, step.committed, &u[i]);
            check_finite(it, &new)?;
            updates[i] = change(&new, &u[i], me.gramian());
            u[i] = new;
            let mut diag = step.diag;
            diag.iter = it;
            diag.module = i + 1;
            diag.update_norm = updates[i];
            order_changed |= step.p_tilde != p_tilde[i];
            p_tilde[i] = step.p_tilde;
            diags.push(diag);
        }
        log::debug!(
            "reduced NISP iteration {it}: updates {:.3e} {:.3e}, d {:?}, p~ {:?}",
            updates[0],
            updates[1],
            [diags[diags.len() - 2].d, diags[diags.len() - 1].d],
            p_tilde
        );
        // The truncated inputs move by up to eps_dim between iterations, so
        // updates below that level are not resolved. The committed lift lags
        // an order increase by one iteration, so a small update is only final
        // once the orders have settled.
        if updates[0] <= floor[0] && updates[1] <= floor[1] && !order_changed {
            return lp.report(Method::Reduced, u, it, true, calls, start, diags);
        }
        // When the retained KL subspace jitters between iterations (close
        // singular values at the cut) the updates level off above the floor.
        // An order change makes the next update transitional, so tracking
        // restarts after it.
        let ratio = (updates[0] / floor[0]).max(updates[1] / floor[1]);
        if order_changed {
            (best, best_at) = (f64::INFINITY, it);
        } else if ratio < best {
            (best, best_at) = (ratio, it);
        } else if rcfg.stall_window > 0 && it - best_at >= rcfg.stall_window && best <= rcfg.stall_factor {
            log::warn!("reduced NISP settled at {:.1}x the stopping floor after {it} iterations", ratio);
            let mut rep = lp.report(Method::Reduced, u, it, true, calls, start, diags)?;
            rep.stalled = true;
            return Ok(rep);
        }
    }
    log::warn!("reduced NISP did not converge in {} iterations", cfg.max_iters);
    lp.report(Method::Reduced, u, cfg.max_iters, false, calls, start, diags)
}

fn padded(c: &CoeffMatrix, terms: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(c.nrows(), terms);
    let k = terms.min(c.terms());
    out.columns_mut(0, k).copy_from(&c.data.columns(0, k));
    out
}

/// Combined relative mean-square error of a coefficient pair against a
/// reference pair of equal or higher order in the same variables:
/// `sqrt(sum_i |U_i - R_i|_G^2) / sqrt(sum_i |R_i|_G^2)`.
pub fn relative_error(u: [&CoeffMatrix; 2], reference: [&CoeffMatrix; 2], g: [&Gramian; 2]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..2 {
        if u[i].s != reference[i].s || u[i].nrows() != reference[i].nrows() {
            return Err(Error::InvalidArgument("error: coefficient shapes differ".into()));
        }
        let terms = u[i].terms().max(reference[i].terms());
        let a = padded(u[i], terms);
        let r = padded(reference[i], terms);
        num += weighted_frobenius(&(&a - &r), g[i]).powi(2);
        den += weighted_frobenius(&r, g[i]).powi(2);
    }
    if den == 0.0 {
        return Ok(num.sqrt());
    }
    Ok((num / den).sqrt())
}

/// Total error against a reference together with labeled contributions read
/// from the final iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    pub total: f64,
    pub per_module: [f64; 2],
    /// `(label, value)` with labels `bgs`, `gpc`, `dim_1`, `dim_2`, `ord_1`, `ord_2`.
    pub components: Vec<(String, f64)>,
}

pub fn error_decomposition(
    report: &PropagationReport,
    reference: [&CoeffMatrix; 2],
    g: [&Gramian; 2],
) -> Result<ErrorDecomposition> {
    let (u1, u2) = report.coefficients()?;
    let total = relative_error([&u1, &u2], reference, g)?;
    let mut per_module = [0.0; 2];
    for (i, u) in [&u1, &u2].into_iter().enumerate() {
        let terms = u.terms().max(reference[i].terms());
        let r = padded(reference[i], terms);
        per_module[i] = relative_update(
            weighted_frobenius(&r, g[i]),
            weighted_frobenius(&(padded(u, terms) - &r), g[i]),
        );
    }
    let mut components = Vec::new();
    let bgs = report.diagnostics.iter().rev().take(2).map(|d| d.update_norm).fold(0.0, f64::max);
    components.push(("bgs".to_string(), bgs));
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..2 {
        let r = &reference[i].data;
        let k = u1.terms().min(r.ncols());
        let tail = r.columns(k, r.ncols() - k).into_owned();
        num += weighted_frobenius(&tail, g[i]).powi(2);
        den += weighted_frobenius(r, g[i]).powi(2);
    }
    components.push(("gpc".to_string(), if den > 0.0 { (num / den).sqrt() } else { 0.0 }));
    if report.method == Method::Reduced {
        for m in 1..=2 {
            if let Some(d) = report.last_diagnostic(m) {
                components.push((format!("dim_{m}"), d.dim_tail));
                components.push((format!("ord_{m}"), d.order_gap));
            }
        }
    }
    Ok(ErrorDecomposition {
        total,
        per_module,
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::AffineModule;

    fn linear_pair() -> (AffineModule, AffineModule) {
        let m1 = AffineModule::new(
            DMatrix::from_row_slice(2, 1, &[0.3, -0.2]),
            DMatrix::from_row_slice(2, 1, &[0.5, 0.1]),
            DVector::from_vec(vec![1.0, 2.0]),
        );
        let m2 = AffineModule::new(
            DMatrix::from_row_slice(1, 2, &[0.4, 0.1]),
            DMatrix::from_row_slice(1, 1, &[-0.3]),
            DVector::from_vec(vec![0.5]),
        );
        (m1, m2)
    }

    #[test]
    fn input_matrix_single_parameter() {
        let setup = NispSetup::with_level(1, 1, 2, 2, RuleKind::Tensor).unwrap();
        let x = input_gpc(&setup, 0).unwrap();
        assert_eq!(x.nrows(), 1);
        assert!(x[(0, 0)].abs() < 1e-14);
        assert!((x[(0, 1)] - 1.0 / 3f64.sqrt()).abs() < 1e-14);
        for k in 2..x.ncols() {
            assert!(x[(0, k)].abs() < 1e-14);
        }
        let y = input_gpc(&setup, 1).unwrap();
        assert!((y[(0, 2)] - 1.0 / 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn standard_matches_reduced_on_linear_problem() {
        let (m1, m2) = linear_pair();
        let setup = NispSetup::with_level(1, 1, 2, 2, RuleKind::Tensor).unwrap();
        let cfg = BgsConfig {
            relaxation: 1.0,
            tol: 1e-13,
            max_iters: 100,
        };
        let init = deterministic_init(&m1, &m2, &setup, &cfg).unwrap();
        let std = standard_nisp(&m1, &m2, &setup, init.clone(), &cfg).unwrap();
        assert!(std.converged);
        let rcfg = ReducedConfig {
            eps_dim: [1e-14; 2],
            eps_ord: [1e-14; 2],
            ..Default::default()
        };
        let red = reduced_nisp(&m1, &m2, &setup, init, &cfg, &rcfg).unwrap();
        let (a1, a2) = std.coefficients().unwrap();
        let (b1, b2) = red.coefficients().unwrap();
        assert!(red.converged);
        assert!((a1.data - b1.data).amax() < 1e-10);
        assert!((a2.data - b2.data).amax() < 1e-10);
        assert!(red.total_calls() <= std.total_calls());
    }

    #[test]
    fn stored_coefficients_round_trip() {
        let basis = TotalDegreeBasis::new(2, 1).unwrap();
        let c = CoeffMatrix::new(DMatrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64), &basis).unwrap();
        let s = StoredCoeff::from(&c);
        assert_eq!(s.data, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(s.to_coeff().unwrap(), c);
    }

    #[test]
    fn relative_error_pads_lower_order() {
        let b1 = TotalDegreeBasis::new(1, 1).unwrap();
        let b2 = TotalDegreeBasis::new(1, 2).unwrap();
        let a = CoeffMatrix::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), &b1).unwrap();
        let r = CoeffMatrix::new(DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 1.0]), &b2).unwrap();
        let g = Gramian::identity(1);
        let e = relative_error([&a, &a], [&r, &r], [&g, &g]).unwrap();
        assert!((e - (0.5f64).sqrt()).abs() < 1e-14);
    }
}
