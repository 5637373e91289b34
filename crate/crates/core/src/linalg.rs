//! Dense and banded linear-algebra kernels that the algorithms need beyond
//! what nalgebra offers: a banded LU with partial pivoting for module solves
//! and a Householder QR with column pivoting for quadrature compression.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Square banded matrix with `kl` sub- and `ku` super-diagonals, stored in
/// column-major band layout with `kl` extra rows reserved for pivot fill-in.
#[derive(Clone, Debug)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        self.kl + self.ku + i - j + j * self.ldab
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i + self.ku >= j && j + self.kl >= i
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.ab[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Adds `v` to entry (i, j). Panics if the entry lies outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            self.in_band(i, j),
            "entry ({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.ab[k] = v;
    }

    /// Zeroes row `i` and puts `diag` on the diagonal.
    pub fn set_identity_row(&mut self, i: usize, diag: f64) {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        for j in lo..=hi {
            let k = self.idx(i, j);
            self.ab[k] = 0.0;
        }
        let k = self.idx(i, i);
        self.ab[k] = diag;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for (i, yi) in y.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *yi += self.ab[self.idx(i, j)] * x[j];
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// LU factorization with partial pivoting, consuming the matrix.
    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        let kl = self.kl;
        let kv = self.kl + self.ku;
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let base = j * self.ldab + kv;
            let mut jp = 0;
            let mut best = self.ab[base].abs();
            for t in 1..=km {
                let a = self.ab[base + t].abs();
                if a > best {
                    best = a;
                    jp = t;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Numerical(format!(
                    "banded LU: zero or non-finite pivot in column {j}"
                )));
            }
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + jp, c);
                    self.ab.swap(a, b);
                }
            }
            if km > 0 {
                let inv = 1.0 / self.ab[base];
                for t in 1..=km {
                    self.ab[base + t] *= inv;
                }
                for c in j + 1..=ju {
                    let ajc = self.ab[self.idx(j, c)];
                    if ajc != 0.0 {
                        let cb = self.idx(j, c);
                        for t in 1..=km {
                            let l = self.ab[base + t];
                            self.ab[cb + t] -= l * ajc;
                        }
                    }
                }
            }
        }
        Ok(BandedLu { m: self, ipiv })
    }
}

/// Factored banded matrix.
#[derive(Clone, Debug)]
pub struct BandedLu {
    m: BandedMatrix,
    ipiv: Vec<usize>,
}

impl BandedLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let a = &self.m;
        let n = a.n;
        let kv = a.kl + a.ku;
        for j in 0..n {
            let l = self.ipiv[j];
            if l != j {
                b.swap(j, l);
            }
            let km = a.kl.min(n - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                let base = j * a.ldab + kv;
                for t in 1..=km {
                    b[j + t] -= a.ab[base + t] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let base = j * a.ldab + kv;
            b[j] /= a.ab[base];
            let bj = b[j];
            if bj != 0.0 {
                let lo = j.saturating_sub(kv);
                for i in lo..j {
                    b[i] -= a.ab[base + i - j] * bj;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Householder QR with column pivoting, stopped at numerical rank.
///
/// The pivot at step k is the remaining column of largest norm, so
/// |R_kk| is non-increasing and the factorization stops at the first
/// step with |R_kk| <= tol * |R_00|.
#[derive(Clone, Debug)]
pub struct PivotedQr {
    qr: DMatrix<f64>,
    betas: Vec<f64>,
    /// `perm[k]` is the original index of the column at position k.
    pub perm: Vec<usize>,
    pub rank: usize,
}

impl PivotedQr {
    pub fn new(a: &DMatrix<f64>, tol: f64) -> Self {
        let (m, n) = a.shape();
        let mut qr = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut norms: Vec<f64> = (0..n).map(|j| qr.column(j).norm_squared()).collect();
        let kmax = m.min(n);
        let mut betas = Vec::with_capacity(kmax);
        let mut r00 = 0.0;
        let mut rank = 0;
        for k in 0..kmax {
            let mut p = k;
            for j in k + 1..n {
                if norms[j] > norms[p] {
                    p = j;
                }
            }
            if p != k {
                qr.swap_columns(k, p);
                perm.swap(k, p);
                norms.swap(k, p);
            }
            let alpha = norms[k].sqrt();
            if k == 0 {
                r00 = alpha;
            }
            if alpha == 0.0 || alpha <= tol * r00 {
                break;
            }
            // Householder vector v with v_k = 1 mapping x to -sign(x_k)*|x| e_k.
            let xk = qr[(k, k)];
            let s = if xk >= 0.0 { -alpha } else { alpha };
            let v0 = xk - s;
            for i in k + 1..m {
                qr[(i, k)] /= v0;
            }
            let beta = -v0 / s;
            qr[(k, k)] = s;
            for j in k + 1..n {
                let mut dot = qr[(k, j)];
                for i in k + 1..m {
                    dot += qr[(i, k)] * qr[(i, j)];
                }
                let f = beta * dot;
                if f != 0.0 {
                    qr[(k, j)] -= f;
                    for i in k + 1..m {
                        let vi = qr[(i, k)];
                        qr[(i, j)] -= f * vi;
                    }
                }
                let mut ns = 0.0;
                for i in k + 1..m {
                    ns += qr[(i, j)] * qr[(i, j)];
                }
                norms[j] = ns;
            }
            betas.push(beta);
            rank += 1;
        }
        Self {
            qr,
            betas,
            perm,
            rank,
        }
    }

    pub fn rows(&self) -> usize {
        self.qr.nrows()
    }

    /// Leading `rank` rows of R (rank x n, upper trapezoidal, permuted columns).
    pub fn r(&self) -> DMatrix<f64> {
        let (_, n) = self.qr.shape();
        DMatrix::from_fn(self.rank, n, |i, j| if j >= i { self.qr[(i, j)] } else { 0.0 })
    }

    /// First `cols` columns of the orthogonal factor; `cols <= rank`.
    pub fn q_thin(&self, cols: usize) -> DMatrix<f64> {
        assert!(cols <= self.rank);
        let m = self.qr.nrows();
        let mut e = DMatrix::<f64>::zeros(m, cols);
        for c in 0..cols {
            e[(c, c)] = 1.0;
        }
        for k in (0..self.rank).rev() {
            let beta = self.betas[k];
            for c in 0..cols {
                let mut dot = e[(k, c)];
                for i in k + 1..m {
                    dot += self.qr[(i, k)] * e[(i, c)];
                }
                let f = beta * dot;
                if f != 0.0 {
                    e[(k, c)] -= f;
                    for i in k + 1..m {
                        e[(i, c)] -= f * self.qr[(i, k)];
                    }
                }
            }
        }
        e
    }
}

/// Solves the upper-triangular system `r x = b` by back substitution.
pub fn solve_upper(r: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = r.nrows();
    let mut x = b.clone();
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= r[(i, j)] * x[j];
        }
        let d = r[(i, i)];
        if d == 0.0 || !d.is_finite() {
            return Err(Error::Numerical(format!(
                "singular triangular factor at row {i}"
            )));
        }
        x[i] = s / d;
    }
    Ok(x)
}
