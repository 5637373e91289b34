//! Per-iteration dimension and order reduction: a Gramian-weighted SVD of
//! the stacked module inputs, data-driven orthonormal bases on the reduced
//! variables and sparse quadrature rules extracted by pivoted QR.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::basis::{total_degree_indices, MultiIndex};
use crate::error::{Error, Result};
use crate::gpc::{weighted_frobenius, Gramian};
use crate::linalg::{solve_upper, PivotedQr};

/// Convergence threshold of the iterative SVD and eigen solvers. Tighter
/// values can stall the bidiagonal sweep and return inaccurate factors.
const SOLVER_EPS: f64 = 5.0 * f64::EPSILON;

/// Numerical thresholds of the reduction stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionTolerances {
    /// Relative singular-value floor for the input SVD.
    pub svd_rank: f64,
    /// Relative eigenvalue floor for the Hankel factorization.
    pub hankel_rank: f64,
    /// Relative diagonal floor for pivoted-QR rank detection.
    pub qr_rank: f64,
}

impl Default for ReductionTolerances {
    fn default() -> Self {
        Self {
            svd_rank: 1e-12,
            hankel_rank: 1e-12,
            qr_rank: 1e-10,
        }
    }
}

/// gPC coefficients of `[own state; partner state; local parameters]` with
/// the block Gramians.
#[derive(Clone, Debug)]
pub struct StackedInput {
    pub coeff: DMatrix<f64>,
    pub gramians: [Gramian; 3],
}

impl StackedInput {
    pub fn block_sizes(&self) -> [usize; 3] {
        [self.gramians[0].dim(), self.gramians[1].dim(), self.gramians[2].dim()]
    }

    /// Row offsets `(n_own, n_own + n_partner, r)`.
    pub fn block_bounds(&self) -> (usize, usize, usize) {
        let [a, b, c] = self.block_sizes();
        (a, a + b, a + b + c)
    }

    fn blockwise(&self, x: &DMatrix<f64>, f: impl Fn(&Gramian, &DMatrix<f64>) -> DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        let mut off = 0;
        for g in &self.gramians {
            let k = g.dim();
            let part = f(g, &x.rows(off, k).into_owned());
            out.rows_mut(off, k).copy_from(&part);
            off += k;
        }
        out
    }

    /// `Gamma^{1/2} x` with the Cholesky-transpose square root per block.
    pub fn sqrt_apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.blockwise(x, |g, v| g.sqrt_apply(v))
    }

    /// `Gamma^{-1/2} x`.
    pub fn sqrt_solve(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.blockwise(x, |g, v| g.sqrt_solve(v))
    }

    /// Gamma-weighted Frobenius norm of `x`.
    pub fn norm(&self, x: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        let mut off = 0;
        for g in &self.gramians {
            let k = g.dim();
            acc += weighted_frobenius(&x.rows(off, k).into_owned(), g).powi(2);
            off += k;
        }
        acc.sqrt()
    }
}

/// Stacks own, partner and parameter coefficient matrices.
pub fn stack_inputs(
    own: &DMatrix<f64>,
    partner: &DMatrix<f64>,
    params: &DMatrix<f64>,
    g_own: &Gramian,
    g_partner: &Gramian,
) -> Result<StackedInput> {
    let cols = own.ncols();
    if partner.ncols() != cols || params.ncols() != cols {
        return Err(Error::InvalidArgument(format!(
            "stack: column counts {}, {}, {} differ",
            cols,
            partner.ncols(),
            params.ncols()
        )));
    }
    if g_own.dim() != own.nrows() || g_partner.dim() != partner.nrows() {
        return Err(Error::InvalidArgument("stack: Gramian dimension mismatch".into()));
    }
    let r = own.nrows() + partner.nrows() + params.nrows();
    let mut coeff = DMatrix::zeros(r, cols);
    coeff.rows_mut(0, own.nrows()).copy_from(own);
    coeff.rows_mut(own.nrows(), partner.nrows()).copy_from(partner);
    coeff
        .rows_mut(own.nrows() + partner.nrows(), params.nrows())
        .copy_from(params);
    Ok(StackedInput {
        coeff,
        gramians: [g_own.clone(), g_partner.clone(), Gramian::identity(params.nrows())],
    })
}

/// Truncated Karhunen-Loeve representation `z(theta) = zbar + Z theta` of a
/// stacked input, with `theta_j = Theta_j . psi(xi)`.
#[derive(Clone, Debug)]
pub struct KlReduction {
    pub mean: DVector<f64>,
    /// `r x d`, columns `upsilon_k sigma_k`.
    pub map: DMatrix<f64>,
    /// `d x (P+1)`, column 0 zero.
    pub theta: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub d: usize,
    /// Set when the input has no fluctuation; `theta` and `map` are zero.
    pub degenerate: bool,
    /// Row offsets `(n_own, n_own + n_partner, r)`.
    pub bounds: (usize, usize, usize),
}

/// JSON-friendly view of a [`KlReduction`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KlReductionDump {
    pub d: usize,
    pub degenerate: bool,
    pub bounds: (usize, usize, usize),
    pub singular_values: Vec<f64>,
    pub mean: Vec<f64>,
    /// Row-major `r x d`.
    pub map: Vec<f64>,
    /// Row-major `d x (P+1)`.
    pub theta: Vec<f64>,
    pub terms: usize,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl KlReduction {
    pub fn dump(&self) -> KlReductionDump {
        KlReductionDump {
            d: self.d,
            degenerate: self.degenerate,
            bounds: self.bounds,
            singular_values: self.singular_values.clone(),
            mean: self.mean.as_slice().to_vec(),
            map: row_major(&self.map),
            theta: row_major(&self.theta),
            terms: self.theta.ncols(),
        }
    }

    pub fn from_dump(d: &KlReductionDump) -> Result<Self> {
        let r = d.mean.len();
        if d.map.len() != r * d.d || d.theta.len() != d.d * d.terms {
            return Err(Error::Format("KL dump sizes inconsistent".into()));
        }
        Ok(Self {
            mean: DVector::from_vec(d.mean.clone()),
            map: DMatrix::from_row_slice(r, d.d, &d.map),
            theta: DMatrix::from_row_slice(d.d, d.terms, &d.theta),
            singular_values: d.singular_values.clone(),
            d: d.d,
            degenerate: d.degenerate,
            bounds: d.bounds,
        })
    }

    /// `sqrt(sum_{j>d} sigma_j^2)`, the truncation error of the expansion.
    pub fn tail_norm(&self) -> f64 {
        self.singular_values.iter().skip(self.d).map(|s| s * s).sum::<f64>().sqrt()
    }

    /// Tail-to-total singular value energy ratio.
    pub fn tail_ratio(&self) -> f64 {
        let total = self.singular_values.iter().map(|s| s * s).sum::<f64>().sqrt();
        if total == 0.0 {
            0.0
        } else {
            self.tail_norm() / total
        }
    }

    /// `zbar + Z theta`.
    pub fn input_at(&self, theta: &[f64]) -> DVector<f64> {
        &self.mean + &self.map * DVector::from_column_slice(theta)
    }

    /// Splits a stacked vector into own, partner and parameter blocks.
    pub fn split(&self, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let (a, b, c) = self.bounds;
        (
            z.rows(0, a).into_owned(),
            z.rows(a, b - a).into_owned(),
            z.rows(b, c - b).into_owned(),
        )
    }

    /// Truncated surrogate `zbar e_0^T + Z Theta` of the stacked coefficients.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut y = &self.map * &self.theta;
        let mut c0 = y.column_mut(0);
        c0 += &self.mean;
        y
    }
}

/// Sign of the entry of largest magnitude, first one on ties.
fn dominant_sign<'a>(v: impl Iterator<Item = &'a f64>) -> f64 {
    let mut best = 0.0f64;
    for &x in v {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Reduced dimension: smallest `k` whose tail energy ratio is at most `eps`.
pub fn select_dimension(sigma: &[f64], eps: f64) -> usize {
    // Suffix sums keep small tails accurate.
    let mut tails = vec![0.0; sigma.len() + 1];
    for k in (0..sigma.len()).rev() {
        tails[k] = tails[k + 1] + sigma[k] * sigma[k];
    }
    let total = tails[0];
    if total == 0.0 {
        return 1;
    }
    (1..=sigma.len())
        .find(|&k| (tails[k] / total).sqrt() <= eps)
        .unwrap_or(sigma.len())
        .max(1)
}

/// SVD with `V^T` returned separately. Wide matrices are first reduced by a
/// QR factorization of their transpose, `A^T = Q R`, so the iterative SVD
/// runs on the square factor `R^T`.
fn wide_svd(a: DMatrix<f64>) -> Result<(SVD<f64, nalgebra::Dyn, nalgebra::Dyn>, DMatrix<f64>)> {
    let fail = || Error::Numerical("SVD of stacked input did not converge".into());
    if a.ncols() <= a.nrows() {
        let svd = SVD::try_new(a, true, true, SOLVER_EPS, 10_000).ok_or_else(fail)?;
        let vt = svd.v_t.clone().expect("requested V^T");
        return Ok((svd, vt));
    }
    let qr = a.transpose().qr();
    let (q, r) = qr.unpack();
    let svd = SVD::try_new(r.transpose(), true, true, SOLVER_EPS, 10_000).ok_or_else(fail)?;
    let vt = svd.v_t.as_ref().expect("requested V^T") * q.transpose();
    Ok((svd, vt))
}

/// Gramian-weighted SVD of the fluctuating part of a stacked input,
/// truncated by the tail-energy tolerance `eps_dim`.
pub fn dimension_reduce(y: &StackedInput, eps_dim: f64, tol: &ReductionTolerances) -> Result<KlReduction> {
    if !(eps_dim > 0.0 && eps_dim < 1.0) {
        return Err(Error::InvalidArgument(format!("eps_dim {eps_dim} not in (0, 1)")));
    }
    let r = y.coeff.nrows();
    let terms = y.coeff.ncols();
    let mean = y.coeff.column(0).into_owned();
    let bounds = y.block_bounds();
    let degenerate = |sigma: Vec<f64>| KlReduction {
        mean: mean.clone(),
        map: DMatrix::zeros(r, 1),
        theta: DMatrix::zeros(1, terms),
        singular_values: sigma,
        d: 1,
        degenerate: true,
        bounds,
    };
    if terms < 2 {
        return Ok(degenerate(vec![]));
    }
    let fl = y.coeff.columns(1, terms - 1).into_owned();
    let weighted = y.sqrt_apply(&fl);
    if weighted.iter().all(|v| *v == 0.0) {
        return Ok(degenerate(vec![0.0; r.min(terms - 1)]));
    }
    let (svd, vt) = wide_svd(weighted)?;
    let u = svd.u.as_ref().expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let sigma: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let smax = sigma[0];
    let numerical_rank = sigma.iter().filter(|&&s| s > tol.svd_rank * smax).count().max(1);
    let d = select_dimension(&sigma, eps_dim).min(numerical_rank);
    let mut left = DMatrix::zeros(r, d);
    let mut theta = DMatrix::zeros(d, terms);
    for (k, &src) in order.iter().take(d).enumerate() {
        // Fix the sign so the largest entry of each right vector is positive.
        let row = vt.row(src);
        let sgn = dominant_sign(row.iter());
        left.set_column(k, &(u.column(src) * (sgn * sigma[k])));
        for c in 0..terms - 1 {
            theta[(k, c + 1)] = sgn * row[c];
        }
    }
    let map = y.sqrt_solve(&left);
    Ok(KlReduction {
        mean,
        map,
        theta,
        singular_values: sigma,
        d,
        degenerate: false,
        bounds,
    })
}

/// Reduced variables at the nodes: `Theta psi(xi_j)`, one column per node.
pub fn theta_at_nodes(kl: &KlReduction, psi: &DMatrix<f64>) -> DMatrix<f64> {
    &kl.theta * psi
}

/// Monomials of total degree at most `deg` in `d` variables, in the basis
/// ordering.
pub fn monomial_indices(d: usize, deg: usize) -> Result<Vec<MultiIndex>> {
    total_degree_indices(d, deg)
}

/// Monomial values, one row per index and one column per point.
pub fn monomial_matrix(points: &DMatrix<f64>, indices: &[MultiIndex]) -> DMatrix<f64> {
    let d = points.nrows();
    let q = points.ncols();
    let maxdeg = indices.iter().map(|a| a.degree()).max().unwrap_or(0);
    let mut out = DMatrix::zeros(indices.len(), q);
    let mut pw = vec![0.0; d * (maxdeg + 1)];
    for j in 0..q {
        for k in 0..d {
            let x = points[(k, j)];
            let base = k * (maxdeg + 1);
            pw[base] = 1.0;
            for e in 1..=maxdeg {
                pw[base + e] = pw[base + e - 1] * x;
            }
        }
        for (i, alpha) in indices.iter().enumerate() {
            let mut v = 1.0;
            for (k, &a) in alpha.0.iter().enumerate() {
                if a > 0 {
                    v *= pw[k * (maxdeg + 1) + a];
                }
            }
            out[(i, j)] = v;
        }
    }
    out
}

fn weighted_gram(m: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let mut mw = m.clone();
    for (j, mut col) in mw.column_iter_mut().enumerate() {
        col *= weights[j];
    }
    let h = mw * m.transpose();
    (&h + h.transpose()) * 0.5
}

/// Moment matrix `H = sum_j w_j m(theta_j) m(theta_j)^T` of the monomials of
/// degree at most `order`.
pub fn build_hankel(theta: &DMatrix<f64>, weights: &[f64], order: usize) -> Result<DMatrix<f64>> {
    let idx = monomial_indices(theta.nrows().max(1), order)?;
    Ok(weighted_gram(&monomial_matrix(theta, &idx), weights))
}

/// Orthonormal basis on the reduced variables: `phi = T m(theta)` with
/// `sum_j w_j phi(theta_j) phi(theta_j)^T = diag(sign)`.
#[derive(Clone, Debug)]
pub struct ReducedBasis {
    pub d: usize,
    pub order: usize,
    pub indices: Vec<MultiIndex>,
    /// `rank x N` map from monomials to basis functions.
    pub transform: DMatrix<f64>,
    /// Diagonal of the sign matrix, entries +-1.
    pub sign: Vec<f64>,
    /// Basis values at the nodes used to build it, `rank x Q`.
    pub node_evals: DMatrix<f64>,
}

impl ReducedBasis {
    pub fn len(&self) -> usize {
        self.sign.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sign.is_empty()
    }

    /// Basis values at arbitrary points, one column per point.
    pub fn eval(&self, theta: &DMatrix<f64>) -> DMatrix<f64> {
        &self.transform * monomial_matrix(theta, &self.indices)
    }
}

/// Signed, rank-truncated factorization of the moment matrix `h` and the
/// resulting basis evaluated at `theta`.
pub fn reduced_basis(h: &DMatrix<f64>, theta: &DMatrix<f64>, order: usize, rank_tol: f64) -> Result<ReducedBasis> {
    let d = theta.nrows().max(1);
    let indices = monomial_indices(d, order)?;
    if h.nrows() != indices.len() || !h.is_square() {
        return Err(Error::InvalidArgument(format!(
            "moment matrix is {}x{}, expected {}",
            h.nrows(),
            h.ncols(),
            indices.len()
        )));
    }
    let eig = SymmetricEigen::try_new(h.clone(), SOLVER_EPS, 10_000)
        .ok_or_else(|| Error::Numerical("eigen-decomposition of moment matrix failed".into()))?;
    let mut order_idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order_idx.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .total_cmp(&eig.eigenvalues[a].abs())
            .then(a.cmp(&b))
    });
    let lmax = eig.eigenvalues[order_idx[0]].abs();
    if !(lmax > 0.0) {
        return Err(Error::Numerical("moment matrix vanishes".into()));
    }
    let kept: Vec<usize> = order_idx
        .into_iter()
        .filter(|&k| eig.eigenvalues[k].abs() > rank_tol * lmax)
        .collect();
    let n = indices.len();
    let mut transform = DMatrix::zeros(kept.len(), n);
    let mut sign = Vec::with_capacity(kept.len());
    for (row, &k) in kept.iter().enumerate() {
        let lam = eig.eigenvalues[k];
        let v = eig.eigenvectors.column(k);
        let vs = dominant_sign(v.iter());
        let scale = vs / lam.abs().sqrt();
        for c in 0..n {
            transform[(row, c)] = v[c] * scale;
        }
        sign.push(if lam < 0.0 { -1.0 } else { 1.0 });
    }
    let node_evals = &transform * monomial_matrix(theta, &indices);
    Ok(ReducedBasis {
        d,
        order,
        indices,
        transform,
        sign,
        node_evals,
    })
}

/// Subset of the global nodes with re-weighting that preserves all moments
/// up to the construction degree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseQuadrature {
    /// Global node indices, ascending.
    pub active: Vec<usize>,
    pub weights: Vec<f64>,
    /// Numerical rank of the monomial Vandermonde matrix.
    pub rank: usize,
    pub degree: usize,
    /// Largest absolute moment mismatch against the full rule.
    pub moment_residual: f64,
    /// True when every global node stayed active.
    pub uncompressed: bool,
}

/// Sparse quadrature for the reduced variables: rank-revealing QR of the
/// Vandermonde transpose, a second pivoted QR to select nodes, and a
/// triangular solve for the weights.
pub fn optimal_quadrature(theta: &DMatrix<f64>, weights: &[f64], degree: usize, qr_tol: f64) -> Result<SparseQuadrature> {
    let q = theta.ncols();
    if weights.len() != q {
        return Err(Error::InvalidArgument("weights and nodes differ in length".into()));
    }
    let idx = monomial_indices(theta.nrows().max(1), degree)?;
    let m = monomial_matrix(theta, &idx);
    let first = PivotedQr::new(&m.transpose(), qr_tol);
    let r = first.rank;
    if r == 0 {
        return Err(Error::Numerical("Vandermonde matrix has rank zero".into()));
    }
    let qr_t = first.q_thin(r).transpose();
    let second = PivotedQr::new(&qr_t, qr_tol);
    let r2 = second.rank;
    let rt = second.r();
    let wp = DVector::from_iterator(q, second.perm.iter().map(|&k| weights[k]));
    let rhs = &rt * wp;
    let tri = rt.columns(0, r2).into_owned();
    let x = solve_upper(&tri, &rhs).map_err(|e| match e {
        Error::Numerical(m) => Error::Numerical(format!("{m}; try a looser QR rank tolerance")),
        other => other,
    })?;
    let mut pairs: Vec<(usize, f64)> = (0..r2).map(|k| (second.perm[k], x[k])).collect();
    pairs.sort_by_key(|p| p.0);
    let active: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let sw: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let full = &m * DVector::from_column_slice(weights);
    let mut sparse = DVector::zeros(m.nrows());
    for (k, &j) in active.iter().enumerate() {
        sparse += m.column(j) * sw[k];
    }
    let moment_residual = (full - sparse).amax();
    Ok(SparseQuadrature {
        uncompressed: active.len() == q,
        active,
        weights: sw,
        rank: r,
        degree,
        moment_residual,
    })
}

/// `U~ = sum_{j active} w~_j u_j phi(theta_j)^T S`, with `samples` holding
/// one column per active node in the order of `sq.active`.
pub fn reduced_project(samples: &DMatrix<f64>, sq: &SparseQuadrature, rb: &ReducedBasis) -> Result<DMatrix<f64>> {
    if samples.ncols() != sq.active.len() {
        return Err(Error::InvalidArgument(format!(
            "{} samples for {} active nodes",
            samples.ncols(),
            sq.active.len()
        )));
    }
    let mut phi_w = DMatrix::zeros(rb.len(), sq.active.len());
    for (k, &j) in sq.active.iter().enumerate() {
        for i in 0..rb.len() {
            phi_w[(i, k)] = rb.node_evals[(i, j)] * sq.weights[k] * rb.sign[i];
        }
    }
    Ok(samples * phi_w.transpose())
}

/// `U = sum_j w_j U~ phi(theta_j) psi(xi_j)^T` over a global rule given the
/// reduced basis values `phi` and global basis values `psi` at its nodes.
pub fn lift_to_global(reduced: &DMatrix<f64>, phi: &DMatrix<f64>, weights: &[f64], psi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if phi.ncols() != weights.len() || psi.ncols() != weights.len() || reduced.ncols() != phi.nrows() {
        return Err(Error::InvalidArgument("lift: inconsistent sizes".into()));
    }
    let mut pw = phi.clone();
    for (j, mut col) in pw.column_iter_mut().enumerate() {
        col *= weights[j];
    }
    let k = pw * psi.transpose();
    Ok(reduced * k)
}

/// Order heuristic: raise `p` by one when the order-(p+1) result differs
/// from the order-p result by more than `eps` relative, never beyond `cap`.
pub fn select_order(current: usize, lower: &DMatrix<f64>, higher: &DMatrix<f64>, g: &Gramian, eps: f64, cap: usize) -> usize {
    let diff = weighted_frobenius(&(higher - lower), g);
    let reference = weighted_frobenius(higher, g);
    if diff > eps * reference && current < cap {
        current + 1
    } else {
        current
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{gauss_legendre, tensor_quadrature, TotalDegreeBasis};

    #[test]
    fn dimension_selection() {
        assert_eq!(select_dimension(&[2.0, 1.0, 0.0], 0.6), 1);
        assert_eq!(select_dimension(&[2.0, 1.0, 0.0], 0.4), 2);
        assert_eq!(select_dimension(&[0.0, 0.0], 0.1), 1);
    }

    #[test]
    fn stacking_bounds() {
        let a = DMatrix::from_element(1, 3, 1.0);
        let y = stack_inputs(&a, &a, &a, &Gramian::identity(1), &Gramian::identity(1)).unwrap();
        assert_eq!(y.coeff.nrows(), 3);
        assert_eq!(y.block_bounds(), (1, 2, 3));
        assert!(stack_inputs(&a, &DMatrix::zeros(1, 2), &a, &Gramian::identity(1), &Gramian::identity(1)).is_err());
    }

    #[test]
    fn rank_one_fluctuation() {
        let basis = TotalDegreeBasis::new(2, 2).unwrap();
        let mut c = DMatrix::zeros(3, basis.len());
        c[(0, 0)] = 1.0;
        for i in 0..3 {
            c[(i, 1)] = (i + 1) as f64;
        }
        let y = StackedInput {
            coeff: c.clone(),
            gramians: [Gramian::identity(1), Gramian::identity(1), Gramian::identity(1)],
        };
        let kl = dimension_reduce(&y, 0.5, &ReductionTolerances::default()).unwrap();
        assert_eq!(kl.d, 1);
        assert!((kl.singular_values[0] - 14f64.sqrt()).abs() < 1e-12);
        assert!((kl.reconstruct() - c).amax() < 1e-12);
    }

    #[test]
    fn deterministic_input_is_degenerate() {
        let y = StackedInput {
            coeff: DMatrix::from_row_slice(1, 3, &[2.0, 0.0, 0.0]),
            gramians: [Gramian::identity(1), Gramian::identity(0), Gramian::identity(0)],
        };
        let kl = dimension_reduce(&y, 0.1, &ReductionTolerances::default()).unwrap();
        assert!(kl.degenerate);
        assert_eq!(kl.d, 1);
        assert_eq!(kl.input_at(&[0.7])[0], 2.0);
    }

    #[test]
    fn hankel_uniform_linear() {
        let g = gauss_legendre(4).unwrap();
        let theta = DMatrix::from_row_slice(1, 4, &g.nodes);
        let h = build_hankel(&theta, &g.weights, 1).unwrap();
        assert!((h - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0 / 3.0])).amax() < 1e-14);
        let rb = reduced_basis(&build_hankel(&theta, &g.weights, 1).unwrap(), &theta, 1, 1e-12).unwrap();
        assert_eq!(rb.sign, vec![1.0, 1.0]);
        let at_one = rb.eval(&DMatrix::from_element(1, 1, 1.0));
        assert!((at_one[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((at_one[(1, 0)] - 3f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn identity_hankel() {
        let theta = DMatrix::from_row_slice(1, 2, &[0.3, -0.2]);
        let rb = reduced_basis(&DMatrix::identity(2, 2), &theta, 1, 1e-12).unwrap();
        assert!((rb.transform.clone() - DMatrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn sparse_quadrature_one_dimension() {
        let rule = tensor_quadrature(1, 8).unwrap();
        let theta = rule.nodes.clone();
        let sq = optimal_quadrature(&theta, &rule.weights, 4, 1e-10).unwrap();
        assert!(sq.active.len() <= 5);
        assert!(sq.moment_residual < 1e-10);
    }

    #[test]
    fn minimal_rule_keeps_weights() {
        let g = gauss_legendre(3).unwrap();
        let theta = DMatrix::from_row_slice(1, 3, &g.nodes);
        let sq = optimal_quadrature(&theta, &g.weights, 2, 1e-10).unwrap();
        assert_eq!(sq.active, vec![0, 1, 2]);
        for k in 0..3 {
            assert!((sq.weights[k] - g.weights[k]).abs() < 1e-13);
        }
        assert!(sq.uncompressed);
    }

    #[test]
    fn order_selection() {
        let a = DMatrix::from_element(1, 1, 0.0);
        let b = DMatrix::from_element(1, 1, 1.0);
        let g = Gramian::identity(1);
        assert_eq!(select_order(0, &b, &b, &g, 0.5, 3), 0);
        assert_eq!(select_order(0, &a, &b, &g, 0.5, 3), 1);
        assert_eq!(select_order(0, &a, &b, &g, 2.0, 3), 0);
        assert_eq!(select_order(3, &a, &b, &g, 0.5, 3), 3);
    }
}
