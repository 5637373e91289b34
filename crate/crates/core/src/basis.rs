//! Orthonormal Legendre polynomials, total-degree multivariate bases and
//! tensor / Smolyak quadrature on the hypercube [-1, 1]^s with the uniform
//! probability density.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of quadrature nodes any constructor will produce.
pub const DEFAULT_NODE_CAP: usize = 5_000_000;

/// Three-term recurrence of an orthonormal polynomial family with unit mass:
/// `b[k+1] p_{k+1}(x) = (x - a[k]) p_k(x) - b[k] p_{k-1}(x)`, `p_0 = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Recurrence {
    pub a: Vec<f64>,
    /// `b[0]` is unused; `b[k]` for k >= 1 are the Jacobi off-diagonals.
    pub b: Vec<f64>,
}

impl Recurrence {
    /// Legendre recurrence for the uniform density on [-1, 1], `n` terms.
    pub fn legendre(n: usize) -> Self {
        let b = (0..=n)
            .map(|k| {
                if k == 0 {
                    0.0
                } else {
                    let k = k as f64;
                    k / (4.0 * k * k - 1.0).sqrt()
                }
            })
            .collect();
        Self { a: vec![0.0; n + 1], b }
    }

    fn len(&self) -> usize {
        self.a.len().min(self.b.len())
    }

    /// Values `p_0(x) .. p_deg(x)`.
    pub fn eval_all(&self, x: f64, deg: usize, out: &mut [f64]) {
        out[0] = 1.0;
        if deg == 0 {
            return;
        }
        out[1] = (x - self.a[0]) / self.b[1];
        for k in 1..deg {
            out[k + 1] = ((x - self.a[k]) * out[k] - self.b[k] * out[k - 1]) / self.b[k + 1];
        }
    }

    /// `p_n(x)` and its derivative.
    fn eval_with_derivative(&self, x: f64, n: usize) -> (f64, f64) {
        let (mut p0, mut p1) = (0.0, 1.0);
        let (mut d0, mut d1) = (0.0, 0.0);
        for k in 0..n {
            let bk = if k == 0 { 0.0 } else { self.b[k] };
            let p2 = ((x - self.a[k]) * p1 - bk * p0) / self.b[k + 1];
            let d2 = (p1 + (x - self.a[k]) * d1 - bk * d0) / self.b[k + 1];
            p0 = p1;
            p1 = p2;
            d0 = d1;
            d1 = d2;
        }
        (p1, d1)
    }
}

/// One-dimensional quadrature rule for a probability density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnivariateRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss rule with `n` nodes from the eigen-decomposition of the Jacobi
/// matrix. Nodes are then polished by Newton steps on `p_n` and the weights
/// recomputed with the Christoffel formula, which removes the eigenvector
/// round-off from the weights.
pub fn golub_welsch(rec: &Recurrence, n: usize) -> Result<UnivariateRule> {
    if n == 0 {
        return Err(Error::InvalidArgument("golub_welsch: n = 0".into()));
    }
    if rec.len() < n + 1 {
        return Err(Error::InvalidArgument(format!(
            "golub_welsch: recurrence has {} terms, need {}",
            rec.len(),
            n + 1
        )));
    }
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            rec.a[i]
        } else if i == j + 1 {
            rec.b[i]
        } else if j == i + 1 {
            rec.b[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::try_new(jacobi, 5.0 * f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("golub_welsch: eigen-solver failed".into()))?;
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut buf = vec![0.0; n];
    for pair in pairs.iter_mut() {
        let mut x = pair.0;
        for _ in 0..3 {
            let (p, d) = rec.eval_with_derivative(x, n);
            if d == 0.0 {
                break;
            }
            let step = p / d;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        if (x - pair.0).abs() < 1e-8 {
            rec.eval_all(x, n - 1, &mut buf);
            let s: f64 = buf.iter().map(|v| v * v).sum();
            *pair = (x, 1.0 / s);
        }
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(UnivariateRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1 / total).collect(),
    })
}

/// Gauss-Legendre rule with `n` nodes, normalized to unit mass.
pub fn gauss_legendre(n: usize) -> Result<UnivariateRule> {
    golub_welsch(&Recurrence::legendre(n), n)
}

/// Exponent vector of a multivariate monomial or basis polynomial.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn degree(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, a) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// `C(n, k)` with overflow detection.
pub fn binomial(n: usize, k: usize) -> Option<usize> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

fn push_compositions(rest: usize, dims: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
    if dims == 1 {
        cur.push(rest);
        out.push(MultiIndex(cur.clone()));
        cur.pop();
        return;
    }
    for first in (0..=rest).rev() {
        cur.push(first);
        push_compositions(rest - first, dims - 1, cur, out);
        cur.pop();
    }
}

/// All multi-indices of dimension `s` and total degree at most `p`, sorted by
/// total degree and, within a degree, lexicographically with the first
/// coordinate largest first (so degree one reads `e_1, e_2, ..., e_s`).
pub fn total_degree_indices(s: usize, p: usize) -> Result<Vec<MultiIndex>> {
    if s == 0 {
        return Err(Error::InvalidArgument("dimension s must be >= 1".into()));
    }
    let count = binomial(p + s, s)
        .filter(|&c| c <= 50_000_000)
        .ok_or_else(|| Error::InvalidArgument(format!("basis size C({}, {s}) too large", p + s)))?;
    let mut out = Vec::with_capacity(count);
    let mut cur = Vec::with_capacity(s);
    for deg in 0..=p {
        push_compositions(deg, s, &mut cur, &mut out);
    }
    debug_assert_eq!(out.len(), count);
    Ok(out)
}

/// Orthonormal total-degree polynomial basis on [-1, 1]^s.
#[derive(Clone, Debug)]
pub struct TotalDegreeBasis {
    pub s: usize,
    pub p: usize,
    pub indices: Vec<MultiIndex>,
    recurrence: Recurrence,
}

impl TotalDegreeBasis {
    pub fn new(s: usize, p: usize) -> Result<Self> {
        Ok(Self {
            s,
            p,
            indices: total_degree_indices(s, p)?,
            recurrence: Recurrence::legendre(p + 1),
        })
    }

    /// Number of basis functions, `P + 1`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Basis values at `xi`; errors when `xi` leaves the hypercube.
    pub fn eval(&self, xi: &[f64]) -> Result<DVector<f64>> {
        if xi.len() != self.s {
            return Err(Error::InvalidArgument(format!(
                "point has dimension {}, basis has {}",
                xi.len(),
                self.s
            )));
        }
        if let Some(x) = xi.iter().find(|x| !(x.abs() <= 1.0 + 1e-12)) {
            return Err(Error::InvalidArgument(format!(
                "point coordinate {x} outside [-1, 1]"
            )));
        }
        Ok(self.eval_unchecked(xi))
    }

    /// Basis values at `xi` without a domain check.
    pub fn eval_unchecked(&self, xi: &[f64]) -> DVector<f64> {
        let np = self.p + 1;
        let mut table = vec![0.0; self.s * np];
        for (k, &x) in xi.iter().enumerate() {
            self.recurrence.eval_all(x, self.p, &mut table[k * np..(k + 1) * np]);
        }
        DVector::from_iterator(
            self.len(),
            self.indices.iter().map(|alpha| {
                alpha
                    .0
                    .iter()
                    .enumerate()
                    .fold(1.0, |acc, (k, &a)| if a == 0 { acc } else { acc * table[k * np + a] })
            }),
        )
    }

    /// Basis values at every node of `rule`, one column per node.
    pub fn eval_matrix(&self, rule: &QuadratureRule) -> DMatrix<f64> {
        let mut psi = DMatrix::zeros(self.len(), rule.len());
        for j in 0..rule.len() {
            let col = self.eval_unchecked(rule.node(j).as_slice());
            psi.set_column(j, &col);
        }
        psi
    }
}

/// Tensor or Smolyak construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Tensor,
    Smolyak,
}

/// Quadrature rule on [-1, 1]^s; weights sum to one and may be negative for
/// sparse grids.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub dim: usize,
    pub level: usize,
    /// One column per node.
    pub nodes: DMatrix<f64>,
    pub weights: Vec<f64>,
    pub kind: RuleKind,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, j: usize) -> DVector<f64> {
        self.nodes.column(j).into_owned()
    }

    /// Quadrature of `f` in node order.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.len() {
            let x: Vec<f64> = self.nodes.column(j).iter().copied().collect();
            acc += self.weights[j] * f(&x);
        }
        acc
    }

    /// Writes `x_1, ..., x_s, weight` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.dim).map(|k| format!("x{k}")).collect();
        header.push("weight".into());
        wr.write_record(&header).map_err(csv_err)?;
        for j in 0..self.len() {
            let mut row: Vec<String> = self.nodes.column(j).iter().map(|v| format!("{v:.17e}")).collect();
            row.push(format!("{:.17e}", self.weights[j]));
            wr.write_record(&row).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a rule written by [`QuadratureRule::write_csv`].
    pub fn read_csv<R: std::io::Read>(r: R, level: usize, kind: RuleKind) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let dim = rd.headers().map_err(csv_err)?.len().saturating_sub(1);
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Format(e.to_string())))
                .collect::<Result<_>>()?;
            if vals.len() != dim + 1 {
                return Err(Error::Format("ragged quadrature row".into()));
            }
            coords.extend_from_slice(&vals[..dim]);
            weights.push(vals[dim]);
        }
        Ok(Self {
            dim,
            level,
            nodes: DMatrix::from_vec(dim, weights.len(), coords),
            weights,
            kind,
        })
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Exact integral of the monomial `xi^alpha` under the uniform density.
pub fn uniform_moment(alpha: &[usize]) -> f64 {
    alpha
        .iter()
        .map(|&a| if a % 2 == 1 { 0.0 } else { 1.0 / (a as f64 + 1.0) })
        .product()
}

/// Full tensor product of `(q+1)`-point Gauss rules.
pub fn tensor_quadrature(s: usize, q: usize) -> Result<QuadratureRule> {
    tensor_quadrature_capped(s, q, DEFAULT_NODE_CAP)
}

pub fn tensor_quadrature_capped(s: usize, q: usize, cap: usize) -> Result<QuadratureRule> {
    if s == 0 {
        return Err(Error::InvalidArgument("dimension s must be >= 1".into()));
    }
    let count = (q + 1)
        .checked_pow(s as u32)
        .filter(|&c| c <= cap)
        .ok_or_else(|| Error::Resource(format!("tensor rule ({}^{s} nodes) exceeds cap {cap}", q + 1)))?;
    let g = gauss_legendre(q + 1)?;
    let mut nodes = DMatrix::zeros(s, count);
    let mut weights = vec![0.0; count];
    let mut idx = vec![0usize; s];
    for (j, w) in weights.iter_mut().enumerate() {
        let mut wt = 1.0;
        for k in 0..s {
            nodes[(k, j)] = g.nodes[idx[k]];
            wt *= g.weights[idx[k]];
        }
        *w = wt;
        for k in (0..s).rev() {
            idx[k] += 1;
            if idx[k] <= q {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(QuadratureRule {
        dim: s,
        level: q,
        nodes,
        weights,
        kind: RuleKind::Tensor,
    })
}

/// Smolyak combination of Gauss-Legendre rules with linear growth (level
/// `l` uses `l` nodes), exact for total degree `2q + 1`. Coincident nodes are
/// merged and their weights summed; nodes whose merged weight cancels to
/// zero are dropped. Nodes are returned in lexicographic order.
pub fn smolyak_quadrature(s: usize, q: usize) -> Result<QuadratureRule> {
    smolyak_quadrature_capped(s, q, DEFAULT_NODE_CAP)
}

pub fn smolyak_quadrature_capped(s: usize, q: usize, cap: usize) -> Result<QuadratureRule> {
    if s == 0 {
        return Err(Error::InvalidArgument("dimension s must be >= 1".into()));
    }
    let rules: Vec<UnivariateRule> = (1..=q + 1).map(gauss_legendre).collect::<Result<_>>()?;
    const SCALE: f64 = 1e12;
    let mut acc: BTreeMap<Vec<i64>, (Vec<f64>, f64)> = BTreeMap::new();
    // Level vectors i with entries in 1..=q+1 and q+1 <= |i| <= q+s.
    let mut level = vec![1usize; s];
    let mut raw = 0usize;
    loop {
        let total: usize = level.iter().sum();
        if total > q && total <= q + s {
            let gap = q + s - total;
            let sign = if gap.is_multiple_of(2) { 1.0 } else { -1.0 };
            let coef = sign * binomial(s - 1, gap).unwrap_or(0) as f64;
            let mut pt = vec![0usize; s];
            loop {
                let mut key = Vec::with_capacity(s);
                let mut x = Vec::with_capacity(s);
                let mut w = coef;
                for k in 0..s {
                    let r = &rules[level[k] - 1];
                    let v = r.nodes[pt[k]];
                    x.push(v);
                    key.push((v * SCALE).round() as i64);
                    w *= r.weights[pt[k]];
                }
                acc.entry(key).and_modify(|e| e.1 += w).or_insert((x, w));
                raw += 1;
                if raw > cap.saturating_mul(64) {
                    return Err(Error::Resource(format!("Smolyak rule ({s}, {q}) too large")));
                }
                if !odometer(&mut pt, |k| level[k] - 1, 0) {
                    break;
                }
            }
        }
        if !odometer(&mut level, |_| q + 1, 1) {
            break;
        }
    }
    let kept: Vec<(Vec<f64>, f64)> = acc.into_values().filter(|(_, w)| w.abs() > 1e-15).collect();
    if kept.len() > cap {
        return Err(Error::Resource(format!(
            "Smolyak rule ({s}, {q}) has {} nodes, cap {cap}",
            kept.len()
        )));
    }
    let mut nodes = DMatrix::zeros(s, kept.len());
    let mut weights = Vec::with_capacity(kept.len());
    for (j, (x, w)) in kept.into_iter().enumerate() {
        for k in 0..s {
            nodes[(k, j)] = x[k];
        }
        weights.push(w);
    }
    Ok(QuadratureRule {
        dim: s,
        level: q,
        nodes,
        weights,
        kind: RuleKind::Smolyak,
    })
}

/// Advances `idx` like an odometer (last coordinate fastest) with entries in
/// `lo..=hi(k)`; returns false after the last combination.
fn odometer(idx: &mut [usize], hi: impl Fn(usize) -> usize, lo: usize) -> bool {
    for k in (0..idx.len()).rev() {
        if idx[k] < hi(k) {
            idx[k] += 1;
            return true;
        }
        idx[k] = lo;
    }
    false
}

/// Builds a rule of the requested kind.
pub fn quadrature(kind: RuleKind, s: usize, q: usize) -> Result<QuadratureRule> {
    match kind {
        RuleKind::Tensor => tensor_quadrature(s, q),
        RuleKind::Smolyak => smolyak_quadrature(s, q),
    }
}

/// Largest absolute error of `rule` over all monomials of total degree at
/// most `deg`.
pub fn max_monomial_error(rule: &QuadratureRule, deg: usize) -> Result<f64> {
    let idx = total_degree_indices(rule.dim, deg)?;
    let mut worst: f64 = 0.0;
    for alpha in &idx {
        let approx = rule.integrate(|x| {
            x.iter()
                .zip(&alpha.0)
                .map(|(v, &a)| v.powi(a as i32))
                .product()
        });
        worst = worst.max((approx - uniform_moment(&alpha.0)).abs());
    }
    Ok(worst)
}
