//! gPC coefficient matrices: projection, surrogate evaluation, moments,
//! Gramian-weighted norms, sampling and kernel density estimation.

use std::io::{Read, Write};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{csv_err, QuadratureRule, TotalDegreeBasis};
use crate::error::{Error, Result};

/// gPC coefficient matrix `n x (P+1)` for a total-degree basis of order `p`
/// in `s` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffMatrix {
    pub data: DMatrix<f64>,
    pub p: usize,
    pub s: usize,
}

/// JSON header accompanying a coefficient CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffHeader {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub terms: usize,
}

impl CoeffMatrix {
    pub fn new(data: DMatrix<f64>, basis: &TotalDegreeBasis) -> Result<Self> {
        if data.ncols() != basis.len() {
            return Err(Error::InvalidArgument(format!(
                "coefficient matrix has {} columns, basis has {}",
                data.ncols(),
                basis.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite gPC coefficient".into()));
        }
        Ok(Self {
            data,
            p: basis.p,
            s: basis.s,
        })
    }

    pub fn zeros(n: usize, basis: &TotalDegreeBasis) -> Self {
        Self {
            data: DMatrix::zeros(n, basis.len()),
            p: basis.p,
            s: basis.s,
        }
    }

    /// Deterministic surrogate: `mean` in column 0, zeros elsewhere.
    pub fn from_mean(mean: &DVector<f64>, basis: &TotalDegreeBasis) -> Self {
        let mut c = Self::zeros(mean.len(), basis);
        c.data.set_column(0, mean);
        c
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn terms(&self) -> usize {
        self.data.ncols()
    }

    /// Surrogate value `U psi(xi)`.
    pub fn evaluate(&self, basis: &TotalDegreeBasis, xi: &[f64]) -> Result<DVector<f64>> {
        self.check_basis(basis)?;
        Ok(&self.data * basis.eval(xi)?)
    }

    pub fn mean(&self) -> DVector<f64> {
        self.data.column(0).into_owned()
    }

    /// `U U^T - u_0 u_0^T`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let fl = self.data.columns(1, self.terms() - 1);
        let c = fl * fl.transpose();
        (&c + c.transpose()) * 0.5
    }

    /// Per-row standard deviations.
    pub fn std_dev(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.nrows(),
            (0..self.nrows()).map(|i| {
                self.data
                    .row(i)
                    .iter()
                    .skip(1)
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt()
            }),
        )
    }

    /// Copies the coefficients into a basis of order `p` in the same
    /// variables, truncating or zero-padding the trailing columns.
    pub fn reorder_to(&self, basis: &TotalDegreeBasis) -> Result<Self> {
        if basis.s != self.s {
            return Err(Error::InvalidArgument("dimension mismatch".into()));
        }
        let n = basis.len().min(self.terms());
        let mut out = Self::zeros(self.nrows(), basis);
        out.data.columns_mut(0, n).copy_from(&self.data.columns(0, n));
        Ok(out)
    }

    fn check_basis(&self, basis: &TotalDegreeBasis) -> Result<()> {
        if basis.p != self.p || basis.s != self.s {
            return Err(Error::InvalidArgument(format!(
                "basis (s={}, p={}) does not match coefficients (s={}, p={})",
                basis.s, basis.p, self.s, self.p
            )));
        }
        Ok(())
    }

    pub fn header(&self) -> CoeffHeader {
        CoeffHeader {
            n: self.nrows(),
            p: self.p,
            s: self.s,
            terms: self.terms(),
        }
    }

    /// Row-major CSV without header line.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for i in 0..self.nrows() {
            let row: Vec<String> = self.data.row(i).iter().map(|v| format!("{v:.17e}")).collect();
            wr.write_record(&row).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(header: &CoeffHeader, r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        let mut vals = Vec::with_capacity(header.n * header.terms);
        let mut rows = 0;
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != header.terms {
                return Err(Error::Format(format!(
                    "row {rows} has {} entries, expected {}",
                    rec.len(),
                    header.terms
                )));
            }
            for v in rec.iter() {
                vals.push(v.trim().parse::<f64>().map_err(|e| Error::Format(e.to_string()))?);
            }
            rows += 1;
        }
        if rows != header.n {
            return Err(Error::Format(format!("{rows} rows, header says {}", header.n)));
        }
        Ok(Self {
            data: DMatrix::from_row_slice(header.n, header.terms, &vals),
            p: header.p,
            s: header.s,
        })
    }
}

/// Symmetric positive-definite weight matrix of a discrete state norm.
#[derive(Clone, Debug)]
pub enum Gramian {
    Identity(usize),
    Diagonal(DVector<f64>),
    Dense {
        matrix: DMatrix<f64>,
        chol: Cholesky<f64, Dyn>,
    },
}

impl Gramian {
    pub fn identity(n: usize) -> Self {
        Gramian::Identity(n)
    }

    pub fn diagonal(d: DVector<f64>) -> Result<Self> {
        if d.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("diagonal Gramian must be positive".into()));
        }
        Ok(Gramian::Diagonal(d))
    }

    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidArgument("Gramian must be square".into()));
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-12 * matrix.amax().max(1.0) {
            return Err(Error::InvalidArgument(format!("Gramian asymmetry {asym:e}")));
        }
        let chol = Cholesky::new(matrix.clone())
            .ok_or_else(|| Error::Numerical("Gramian is not positive definite".into()))?;
        Ok(Gramian::Dense { matrix, chol })
    }

    /// Block-diagonal composition.
    pub fn block_diag(blocks: &[&Gramian]) -> Result<Self> {
        if blocks.iter().all(|b| matches!(b, Gramian::Identity(_))) {
            return Ok(Gramian::Identity(blocks.iter().map(|b| b.dim()).sum()));
        }
        if blocks.iter().all(|b| !matches!(b, Gramian::Dense { .. })) {
            let mut d = Vec::new();
            for b in blocks {
                d.extend(b.to_dense().diagonal().iter());
            }
            return Gramian::diagonal(DVector::from_vec(d));
        }
        let n: usize = blocks.iter().map(|b| b.dim()).sum();
        let mut m = DMatrix::zeros(n, n);
        let mut off = 0;
        for b in blocks {
            let k = b.dim();
            m.view_mut((off, off), (k, k)).copy_from(&b.to_dense());
            off += k;
        }
        Gramian::dense(m)
    }

    pub fn dim(&self) -> usize {
        match self {
            Gramian::Identity(n) => *n,
            Gramian::Diagonal(d) => d.len(),
            Gramian::Dense { matrix, .. } => matrix.nrows(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Gramian::Identity(n) => DMatrix::identity(*n, *n),
            Gramian::Diagonal(d) => DMatrix::from_diagonal(d),
            Gramian::Dense { matrix, .. } => matrix.clone(),
        }
    }

    /// `G x`.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Gramian::Identity(_) => x.clone(),
            Gramian::Diagonal(d) => {
                let mut y = x.clone();
                for (i, mut row) in y.row_iter_mut().enumerate() {
                    row *= d[i];
                }
                y
            }
            Gramian::Dense { matrix, .. } => matrix * x,
        }
    }

    /// `F x` where `F^T F = G` (`F = L^T` for the Cholesky factor `L`).
    pub fn sqrt_apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Gramian::Identity(_) => x.clone(),
            Gramian::Diagonal(d) => {
                let mut y = x.clone();
                for (i, mut row) in y.row_iter_mut().enumerate() {
                    row *= d[i].sqrt();
                }
                y
            }
            Gramian::Dense { chol, .. } => chol.l().transpose() * x,
        }
    }

    /// `F^{-1} x`.
    pub fn sqrt_solve(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Gramian::Identity(_) => x.clone(),
            Gramian::Diagonal(d) => {
                let mut y = x.clone();
                for (i, mut row) in y.row_iter_mut().enumerate() {
                    row /= d[i].sqrt();
                }
                y
            }
            Gramian::Dense { chol, .. } => {
                let lt = chol.l().transpose();
                lt.solve_upper_triangular(x).expect("Cholesky factor is nonsingular")
            }
        }
    }

    /// `sqrt(x^T G x)` for a vector.
    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        match self {
            Gramian::Identity(_) => x.norm(),
            Gramian::Diagonal(d) => x.iter().zip(d.iter()).map(|(v, w)| w * v * v).sum::<f64>().sqrt(),
            Gramian::Dense { matrix, .. } => x.dot(&(matrix * x)).max(0.0).sqrt(),
        }
    }
}

/// `sqrt(trace(U^T G U))`.
pub fn weighted_frobenius(c: &DMatrix<f64>, g: &Gramian) -> f64 {
    match g {
        Gramian::Identity(_) => c.norm(),
        Gramian::Diagonal(d) => c
            .row_iter()
            .zip(d.iter())
            .map(|(r, w)| w * r.norm_squared())
            .sum::<f64>()
            .sqrt(),
        Gramian::Dense { matrix, .. } => c.dot(&(matrix * c)).max(0.0).sqrt(),
    }
}

/// `U = sum_j w_j u_j psi_j^T` with `samples` holding one column per node and
/// `psi` the basis values at the nodes.
pub fn project_with(samples: &DMatrix<f64>, weights: &[f64], psi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if samples.ncols() != weights.len() || psi.ncols() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "projection: {} samples, {} weights, {} basis columns",
            samples.ncols(),
            weights.len(),
            psi.ncols()
        )));
    }
    let mut ws = samples.clone();
    for (j, mut col) in ws.column_iter_mut().enumerate() {
        col *= weights[j];
    }
    Ok(ws * psi.transpose())
}

/// Spectral projection of node samples onto `basis` with `rule`.
pub fn project(samples: &DMatrix<f64>, rule: &QuadratureRule, basis: &TotalDegreeBasis) -> Result<CoeffMatrix> {
    let psi = basis.eval_matrix(rule);
    CoeffMatrix::new(project_with(samples, &rule.weights, &psi)?, basis)
}

/// Mean-square error evaluated by quadrature, `sqrt(sum_j w_j |(A-B) psi_j|_G^2)`.
pub fn mean_square_error(
    a: &CoeffMatrix,
    b: &CoeffMatrix,
    g: &Gramian,
    rule: &QuadratureRule,
    basis: &TotalDegreeBasis,
) -> Result<f64> {
    a.check_basis(basis)?;
    b.check_basis(basis)?;
    let diff = &a.data - &b.data;
    let vals = diff * basis.eval_matrix(rule);
    let mut acc = 0.0;
    for j in 0..rule.len() {
        let col = vals.column(j).into_owned();
        acc += rule.weights[j] * g.norm(&col).powi(2);
    }
    Ok(acc.max(0.0).sqrt())
}

/// Mean-square error through orthonormality, `|A - B|_G`.
pub fn mean_square_error_spectral(a: &CoeffMatrix, b: &CoeffMatrix, g: &Gramian) -> f64 {
    weighted_frobenius(&(&a.data - &b.data), g)
}

/// Draws `count` surrogate samples at i.i.d. uniform points; row `k` is
/// sample `k`.
pub fn sample_surrogate(c: &CoeffMatrix, basis: &TotalDegreeBasis, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    c.check_basis(basis)?;
    let xi = uniform_points(basis.s, count, seed);
    let mut psi = DMatrix::zeros(basis.len(), count);
    for k in 0..count {
        psi.set_column(k, &basis.eval_unchecked(xi.column(k).as_slice()));
    }
    Ok((&c.data * psi).transpose())
}

/// `count` i.i.d. points uniform on [-1, 1]^s, one per column.
pub fn uniform_points(s: usize, count: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(s, count, |_, _| rng.gen_range(-1.0..=1.0))
}

/// Kernel density estimate on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityEstimate {
    /// Trapezoid integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }
}

/// Silverman bandwidth `1.06 sigma N^{-1/5}`, floored at 1e-12.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let h = 1.06 * var.sqrt() * n.powf(-0.2);
    if h < 1e-12 {
        log::warn!("degenerate KDE samples, bandwidth floored at 1e-12");
        1e-12
    } else {
        h
    }
}

/// Evenly spaced grid covering the samples plus three bandwidths each side.
pub fn kde_grid(samples: &[f64], points: usize) -> Vec<f64> {
    let h = silverman_bandwidth(samples);
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let pts = points.max(2);
    (0..pts).map(|k| lo + (hi - lo) * k as f64 / (pts - 1) as f64).collect()
}

/// Gaussian-kernel density estimate with Silverman bandwidth.
pub fn kde(samples: &[f64], grid: &[f64]) -> Result<DensityEstimate> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("KDE needs at least two samples".into()));
    }
    let h = silverman_bandwidth(samples);
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let norm = 1.0 / (sorted.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let cut = 8.0 * h;
    let density = grid
        .iter()
        .map(|&x| {
            let lo = sorted.partition_point(|&v| v < x - cut);
            let hi = sorted.partition_point(|&v| v <= x + cut);
            sorted[lo..hi]
                .iter()
                .map(|&v| (-0.5 * ((x - v) / h).powi(2)).exp())
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(DensityEstimate {
        grid: grid.to_vec(),
        density,
        bandwidth: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::tensor_quadrature;

    #[test]
    fn project_constant_and_linear() {
        let basis = TotalDegreeBasis::new(1, 3).unwrap();
        let rule = tensor_quadrature(1, 3).unwrap();
        let samples = DMatrix::from_fn(2, rule.len(), |i, j| if i == 0 { 2.5 } else { rule.nodes[(0, j)] });
        let c = project(&samples, &rule, &basis).unwrap();
        assert!((c.data[(0, 0)] - 2.5).abs() < 1e-14);
        assert!(c.data.row(0).iter().skip(1).all(|v| v.abs() < 1e-14));
        assert!((c.data[(1, 1)] - 1.0 / 3f64.sqrt()).abs() < 1e-14);
        assert!(c.data[(1, 0)].abs() < 1e-14 && c.data[(1, 2)].abs() < 1e-14);
    }

    #[test]
    fn moments_and_norms() {
        let basis = TotalDegreeBasis::new(1, 1).unwrap();
        let c = CoeffMatrix::new(DMatrix::from_row_slice(1, 2, &[1.0, 2.0]), &basis).unwrap();
        assert_eq!(c.mean()[0], 1.0);
        assert!((c.covariance()[(0, 0)] - 4.0).abs() < 1e-15);
        assert!((weighted_frobenius(&DMatrix::identity(2, 2), &Gramian::identity(2)) - 2f64.sqrt()).abs() < 1e-15);
        let g = Gramian::diagonal(DVector::from_vec(vec![4.0])).unwrap();
        assert!((weighted_frobenius(&DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), &g) - 8f64.sqrt()).abs() < 1e-15);
        assert_eq!(weighted_frobenius(&DMatrix::zeros(3, 2), &Gramian::identity(3)), 0.0);
    }

    #[test]
    fn evaluate_single_row() {
        let basis = TotalDegreeBasis::new(1, 1).unwrap();
        let c = CoeffMatrix::new(DMatrix::from_row_slice(1, 2, &[0.0, 1.0]), &basis).unwrap();
        assert!((c.evaluate(&basis, &[1.0]).unwrap()[0] - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.evaluate(&basis, &[0.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn gramian_square_root() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let g = Gramian::dense(m.clone()).unwrap();
        let f = g.sqrt_apply(&DMatrix::identity(2, 2));
        assert!((f.transpose() * &f - m).norm() < 1e-14);
        let back = g.sqrt_solve(&f);
        assert!((back - DMatrix::identity(2, 2)).norm() < 1e-14);
        assert!(Gramian::dense(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
    }

    #[test]
    fn kde_standard_normal() {
        // Box-Muller on a fixed stream.
        let u = uniform_points(2, 100_000, 7);
        let s: Vec<f64> = (0..u.ncols())
            .map(|k| {
                let a = 0.5 * (u[(0, k)] + 1.0);
                let b = 0.5 * (u[(1, k)] + 1.0);
                (-2.0 * a.max(1e-300).ln()).sqrt() * (2.0 * std::f64::consts::PI * b).cos()
            })
            .collect();
        let grid: Vec<f64> = (0..801).map(|k| -6.0 + 12.0 * k as f64 / 800.0).collect();
        let d = kde(&s, &grid).unwrap();
        let peak = d.density[400];
        let exact = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((peak - exact).abs() / exact < 0.05);
        assert!((d.integral() - 1.0).abs() < 0.02);
    }

    #[test]
    fn kde_degenerate() {
        let s = vec![1.5; 10];
        let grid = kde_grid(&s, 11);
        let d = kde(&s, &grid).unwrap();
        assert_eq!(d.bandwidth, 1e-12);
    }

    #[test]
    fn coeff_csv_round_trip() {
        let basis = TotalDegreeBasis::new(2, 2).unwrap();
        let c = CoeffMatrix::new(DMatrix::from_fn(3, 6, |i, j| (i as f64 + 0.1) * (j as f64 - 2.3)), &basis).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let back = CoeffMatrix::read_csv(&c.header(), buf.as_slice()).unwrap();
        assert_eq!(back, c);
    }
}
