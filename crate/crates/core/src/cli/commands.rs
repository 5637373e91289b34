//! The `run`, `verify` and `bench` commands and their artifacts.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::basis::quadrature;
use crate::error::{Error, Result};
use crate::gpc::{kde, kde_grid, sample_surrogate, CoeffMatrix};
use crate::nisp::{
    deterministic_init, reduced_nisp, relative_error, standard_nisp, Method, NispSetup, PropagationReport,
};
use crate::problems::mms::mms_convergence;
use crate::problems::Problem;

/// Reference solution used for the error columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInfo {
    pub p: usize,
    pub level: usize,
    pub nodes: usize,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: f64,
}

/// One row of the comparison table. Costs are module-call counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub s1: usize,
    pub s2: usize,
    pub p: usize,
    pub nodes: usize,
    pub eps_s: Option<f64>,
    pub calls_s: Option<usize>,
    pub d: [Option<usize>; 2],
    pub p_tilde: [Option<usize>; 2],
    pub q_tilde: [Option<usize>; 2],
    pub eps_r: Option<f64>,
    pub calls_r: Option<usize>,
    pub speedup: Option<f64>,
}

pub const TABLE_HEADER: [&str; 15] = [
    "s1", "s2", "p", "Q", "eps_s", "C_s", "d1", "p_tilde1", "Q_tilde1", "d2", "p_tilde2", "Q_tilde2", "eps_r", "C_r",
    "speedup",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn sci(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

impl TableRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.s1.to_string(),
            self.s2.to_string(),
            self.p.to_string(),
            self.nodes.to_string(),
            sci(self.eps_s),
            opt(self.calls_s),
            opt(self.d[0]),
            opt(self.p_tilde[0]),
            opt(self.q_tilde[0]),
            opt(self.d[1]),
            opt(self.p_tilde[1]),
            opt(self.q_tilde[1]),
            sci(self.eps_r),
            opt(self.calls_r),
            self.speedup.map(|x| format!("{x:.4}")).unwrap_or_default(),
        ]
    }
}

/// Wall times of one sweep point, kept out of the CSV output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WallTimes {
    pub s1: usize,
    pub s2: usize,
    pub p: usize,
    pub standard: Option<f64>,
    pub reduced: Option<f64>,
    pub speedup: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub reference: Option<ReferenceInfo>,
    pub standard: Option<PropagationReport>,
    pub reduced: Option<PropagationReport>,
    pub row: TableRow,
    pub wall: WallTimes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: RunConfig,
    pub references: Vec<ReferenceInfo>,
    pub rows: Vec<TableRow>,
    pub wall: Vec<WallTimes>,
}

/// Results of propagating one `(s1, s2, p)` point.
pub struct PointResult {
    pub standard: Option<PropagationReport>,
    pub reduced: Option<PropagationReport>,
    pub row: TableRow,
    pub wall: WallTimes,
}

fn csv_err(e: csv::Error) -> Error {
    crate::basis::csv_err(e)
}

pub fn write_table(path: &Path, rows: &[TableRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(TABLE_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.record()).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Standard NISP of order `p + 1` on a rule of level `p + 2`.
pub fn reference_solution(
    problem: &Problem,
    cfg: &RunConfig,
    p: usize,
) -> Result<((CoeffMatrix, CoeffMatrix), ReferenceInfo)> {
    let (s1, s2) = problem.param_dims();
    let (m1, m2) = problem.modules();
    let setup = NispSetup::with_level(s1, s2, p + 1, p + 2, cfg.rule)?;
    let init = deterministic_init(m1, m2, &setup, &cfg.bgs_config())?;
    let rep = standard_nisp(m1, m2, &setup, init, &cfg.stochastic_config())?;
    if !rep.converged {
        log::warn!("reference solution did not converge");
    }
    let info = ReferenceInfo {
        p: p + 1,
        level: p + 2,
        nodes: setup.nodes(),
        iterations: rep.iterations,
        converged: rep.converged,
        wall_time: rep.wall_time,
    };
    Ok((rep.coefficients()?, info))
}

/// Runs the selected methods at one point and fills the table row.
pub fn propagate_point(
    problem: &Problem,
    cfg: &RunConfig,
    p: usize,
    level: usize,
    standard: bool,
    reduced: bool,
    reference: Option<&(CoeffMatrix, CoeffMatrix)>,
) -> Result<PointResult> {
    let (s1, s2) = problem.param_dims();
    let (m1, m2) = problem.modules();
    let setup = NispSetup::with_level(s1, s2, p, level, cfg.rule)?;
    let init = deterministic_init(m1, m2, &setup, &cfg.bgs_config())?;
    let g = [m1.gramian(), m2.gramian()];
    let error = |rep: &PropagationReport| -> Result<Option<f64>> {
        match reference {
            Some((r1, r2)) => {
                let (u1, u2) = rep.coefficients()?;
                Ok(Some(relative_error([&u1, &u2], [r1, r2], g)?))
            }
            None => Ok(None),
        }
    };
    let std_rep = if standard {
        Some(standard_nisp(m1, m2, &setup, init.clone(), &cfg.stochastic_config())?)
    } else {
        None
    };
    let red_rep = if reduced {
        Some(reduced_nisp(m1, m2, &setup, init, &cfg.stochastic_config(), &cfg.reduced_config())?)
    } else {
        None
    };
    let mut row = TableRow {
        s1,
        s2,
        p,
        nodes: setup.nodes(),
        eps_s: None,
        calls_s: None,
        d: [None; 2],
        p_tilde: [None; 2],
        q_tilde: [None; 2],
        eps_r: None,
        calls_r: None,
        speedup: None,
    };
    if let Some(r) = &std_rep {
        row.eps_s = error(r)?;
        row.calls_s = Some(r.total_calls());
    }
    if let Some(r) = &red_rep {
        row.eps_r = error(r)?;
        row.calls_r = Some(r.total_calls());
        for i in 0..2 {
            if let Some(d) = r.last_diagnostic(i + 1) {
                row.d[i] = Some(d.d);
                row.p_tilde[i] = Some(d.p_tilde);
                row.q_tilde[i] = Some(d.q_tilde);
            }
        }
    }
    if let (Some(a), Some(b)) = (row.calls_s, row.calls_r) {
        row.speedup = Some(a as f64 / b.max(1) as f64);
    }
    let wall = WallTimes {
        s1,
        s2,
        p,
        standard: std_rep.as_ref().map(|r| r.wall_time),
        reduced: red_rep.as_ref().map(|r| r.wall_time),
        speedup: match (&std_rep, &red_rep) {
            (Some(a), Some(b)) if b.wall_time > 0.0 => Some(a.wall_time / b.wall_time),
            _ => None,
        },
    };
    Ok(PointResult {
        standard: std_rep,
        reduced: red_rep,
        row,
        wall,
    })
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Standard => "standard",
        Method::Reduced => "reduced",
    }
}

/// Kernel density estimates of the quantities of interest and the field
/// moments of one converged report.
pub fn write_statistics(dir: &Path, problem: &Problem, cfg: &RunConfig, rep: &PropagationReport) -> Result<()> {
    let name = method_name(rep.method);
    let (c1, c2) = rep.coefficients()?;
    let basis = crate::basis::TotalDegreeBasis::new(c1.s, c1.p)?;
    let x1 = sample_surrogate(&c1, &basis, cfg.kde_samples, cfg.seed)?;
    let x2 = sample_surrogate(&c2, &basis, cfg.kde_samples, cfg.seed)?;
    let names = problem.qoi_names();
    let mut values = vec![Vec::with_capacity(cfg.kde_samples); names.len()];
    for k in 0..cfg.kde_samples {
        let u1 = DVector::from_iterator(x1.ncols(), x1.row(k).iter().copied());
        let u2 = DVector::from_iterator(x2.ncols(), x2.row(k).iter().copied());
        for (j, q) in problem.qoi(&u1, &u2).into_iter().enumerate() {
            values[j].push(q);
        }
    }
    for (qname, v) in names.iter().zip(&values) {
        let est = kde(v, &kde_grid(v, cfg.kde_points))?;
        let mut w = csv::Writer::from_path(dir.join(format!("density_{name}_{qname}.csv"))).map_err(csv_err)?;
        w.write_record(["x", "density"]).map_err(csv_err)?;
        for (x, d) in est.grid.iter().zip(&est.density) {
            w.write_record([format!("{x:.9e}"), format!("{d:.9e}")]).map_err(csv_err)?;
        }
        w.flush()?;
    }
    let stats = [(c1.mean(), c1.std_dev()), (c2.mean(), c2.std_dev())];
    let mut w = csv::Writer::from_path(dir.join(format!("moments_{name}.csv"))).map_err(csv_err)?;
    w.write_record(["module", "field", "index", "x1", "x2", "mean", "std"]).map_err(csv_err)?;
    for block in problem.fields() {
        let (mean, std) = &stats[block.module - 1];
        for k in 0..block.len {
            let (a, b) = match &block.coords {
                Some(c) => (format!("{:.6}", c[k][0]), format!("{:.6}", c[k][1])),
                None => (String::new(), String::new()),
            };
            w.write_record([
                block.module.to_string(),
                block.name.to_string(),
                k.to_string(),
                a,
                b,
                format!("{:.9e}", mean[block.offset + k]),
                format!("{:.9e}", std[block.offset + k]),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn not_converged(rep: &PropagationReport) -> Option<Error> {
    if rep.converged {
        return None;
    }
    let last = rep.diagnostics.iter().rev().take(2).map(|d| d.update_norm).fold(0.0, f64::max);
    Some(Error::NoConvergence {
        iterations: rep.iterations,
        last_update: last,
        last_state: None,
    })
}

fn quadrature_nodes(cfg: &RunConfig, dim: usize, level: usize) -> Result<usize> {
    Ok(quadrature(cfg.rule, dim, level)?.len())
}

/// `run`: one propagation with artifacts in `cfg.out`.
pub fn run(cfg: &RunConfig, dry_run: bool, out: &mut dyn Write) -> Result<()> {
    cfg.validate()?;
    let level = cfg.level();
    if dry_run {
        writeln!(out, "{}", cfg.to_toml())?;
        let dim = cfg.s1 + cfg.s2;
        writeln!(out, "# rule {:?} dim {dim} level {level}: {} nodes", cfg.rule, quadrature_nodes(cfg, dim, level)?)?;
        if cfg.reference {
            writeln!(
                out,
                "# reference order {} level {}: {} nodes",
                cfg.p + 1,
                cfg.p + 2,
                quadrature_nodes(cfg, dim, cfg.p + 2)?
            )?;
        }
        return Ok(());
    }
    let problem = cfg.build_problem(cfg.s1, cfg.s2)?;
    fs::create_dir_all(&cfg.out)?;
    let reference = if cfg.reference {
        Some(reference_solution(&problem, cfg, cfg.p)?)
    } else {
        None
    };
    let point = propagate_point(
        &problem,
        cfg,
        cfg.p,
        level,
        cfg.method.standard(),
        cfg.method.reduced(),
        reference.as_ref().map(|r| &r.0),
    )?;
    write_table(&cfg.out.join("table.csv"), std::slice::from_ref(&point.row))?;
    let mut failure = None;
    for rep in point.standard.iter().chain(point.reduced.iter()) {
        write_statistics(&cfg.out, &problem, cfg, rep)?;
        rep.write_diagnostics_csv(fs::File::create(
            cfg.out.join(format!("diagnostics_{}.csv", method_name(rep.method))),
        )?)?;
        failure = failure.or_else(|| not_converged(rep));
    }
    let report = RunReport {
        config: cfg.clone(),
        reference: reference.map(|r| r.1),
        standard: point.standard,
        reduced: point.reduced,
        row: point.row,
        wall: point.wall,
    };
    write_json(&cfg.out.join("report.json"), &report)?;
    let row = &report.row;
    writeln!(
        out,
        "Q {} eps_s {} C_s {} eps_r {} C_r {} speedup {}",
        row.nodes,
        sci(row.eps_s),
        opt(row.calls_s),
        sci(row.eps_r),
        opt(row.calls_r),
        row.speedup.map(|x| format!("{x:.2}")).unwrap_or_default()
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// `verify`: manufactured-solution convergence study.
pub fn verify(cfg: &RunConfig, dry_run: bool, out: &mut dyn Write) -> Result<()> {
    let (family, meshes, samples) = cfg.mms_setup()?;
    if meshes.len() < 2 {
        return Err(Error::InvalidArgument(
            "a convergence slope needs at least two mesh sizes".into(),
        ));
    }
    if dry_run {
        writeln!(out, "{}", cfg.to_toml())?;
        writeln!(out, "# meshes {meshes:?}, {samples} samples")?;
        return Ok(());
    }
    let study = mms_convergence(&family, &meshes, samples, cfg.seed, &cfg.bgs_config())?;
    fs::create_dir_all(&cfg.out)?;
    let mut w = csv::Writer::from_path(cfg.out.join("convergence.csv")).map_err(csv_err)?;
    w.write_record(["m", "dx", "mean_error", "samples", "failed"]).map_err(csv_err)?;
    for p in &study.points {
        w.write_record([
            p.m.to_string(),
            format!("{:.9e}", p.spacing),
            format!("{:.9e}", p.mean_error),
            p.samples.to_string(),
            p.failed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    writeln!(out, "slope {:.4}", study.slope)?;
    Ok(())
}

/// `bench`: sweep over `s1 = s2` and `p` with both methods against a shared
/// reference per `s`.
pub fn bench(cfg: &RunConfig, dry_run: bool, out: &mut dyn Write) -> Result<()> {
    cfg.validate()?;
    let (ss, ps) = (&cfg.bench.s, &cfg.bench.p);
    if ss.is_empty() || ps.is_empty() {
        return Err(Error::InvalidArgument("empty sweep".into()));
    }
    let p_max = *ps.iter().max().expect("non-empty");
    let level_of = |p: usize| -> Result<usize> {
        match cfg.q {
            Some(q) if q < p => Err(Error::InvalidArgument(format!("quadrature level {q} is below order {p}"))),
            Some(q) => Ok(q),
            None => Ok(p),
        }
    };
    if dry_run {
        writeln!(out, "{}", cfg.to_toml())?;
        for &s in ss {
            for &p in ps {
                let level = level_of(p)?;
                writeln!(out, "# s {s} p {p} level {level}: {} nodes", quadrature_nodes(cfg, 2 * s, level)?)?;
            }
            if cfg.reference {
                writeln!(
                    out,
                    "# s {s} reference order {} level {}: {} nodes",
                    p_max + 1,
                    p_max + 2,
                    quadrature_nodes(cfg, 2 * s, p_max + 2)?
                )?;
            }
        }
        return Ok(());
    }
    fs::create_dir_all(&cfg.out)?;
    let mut report = BenchReport {
        config: cfg.clone(),
        references: Vec::new(),
        rows: Vec::new(),
        wall: Vec::new(),
    };
    for &s in ss {
        let problem = cfg.build_problem(s, s)?;
        let reference = if cfg.reference {
            let (c, info) = reference_solution(&problem, cfg, p_max)?;
            report.references.push(info);
            Some(c)
        } else {
            None
        };
        for &p in ps {
            let point = propagate_point(&problem, cfg, p, level_of(p)?, true, true, reference.as_ref())?;
            writeln!(
                out,
                "s {s} p {p}: eps_s {} eps_r {} calls {} / {}",
                sci(point.row.eps_s),
                sci(point.row.eps_r),
                opt(point.row.calls_s),
                opt(point.row.calls_r)
            )?;
            report.rows.push(point.row);
            report.wall.push(point.wall);
        }
    }
    write_table(&cfg.out.join("table.csv"), &report.rows)?;
    write_json(&cfg.out.join("report.json"), &report)?;
    Ok(())
}
