//! Karhunen-Loeve expansions of the exponential covariance kernel
//! `exp(-|x - y| / l)` on a unit interval centered at zero, and separable
//! products of them on the unit square.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_808_568_877_2;

/// Parity of a one-dimensional eigenfunction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

/// Eigenpair of the exponential kernel on `[-1/2, 1/2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlMode {
    pub parity: Parity,
    pub zeta: f64,
    pub lambda: f64,
    /// Correlation length the mode was built for.
    pub l: f64,
}

impl KlMode {
    fn new(parity: Parity, zeta: f64, l: f64) -> Self {
        Self {
            parity,
            zeta,
            lambda: 2.0 * l / (1.0 + l * l * zeta * zeta),
            l,
        }
    }

    /// `sqrt(lambda) e(x)` and its first two derivatives, with `e` the
    /// L2-normalized eigenfunction.
    pub fn eval(&self, x: f64, der: usize) -> f64 {
        let z = self.zeta;
        let amp = 2.0 * (self.l * z / (1.0 + self.l * self.l * z * z)).sqrt();
        let (s, c) = (z * x).sin_cos();
        match self.parity {
            Parity::Even => {
                let n = (z + z.sin()).sqrt();
                amp / n * [c, -z * s, -z * z * c][der.min(2)]
            }
            Parity::Odd => {
                let n = (z - z.sin()).sqrt();
                amp / n * [s, z * c, -z * z * s][der.min(2)]
            }
        }
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> Result<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Numerical(format!("no sign change on [{a}, {b}]")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

fn check_length(l: f64) -> Result<()> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidArgument(format!("correlation length {l} must be positive")));
    }
    Ok(())
}

/// Roots of `l z + tan(z / 2) = 0`, one in each `((2j - 1) pi, (2j + 1) pi)`,
/// ascending. These index the odd eigenfunctions.
pub fn kl_roots(l: f64, count: usize) -> Result<Vec<f64>> {
    check_length(l)?;
    let pi = std::f64::consts::PI;
    // Multiplied through by cos(z / 2) to remove the poles.
    let f = |z: f64| l * z * (z / 2.0).cos() + (z / 2.0).sin();
    (0..count)
        .map(|k| {
            let a = (2 * k + 1) as f64 * pi;
            let b = (2 * k + 2) as f64 * pi;
            bisect(f, a, b)
        })
        .collect()
}

/// Roots of `1 - l z tan(z / 2) = 0`, one in each `(2j pi, (2j + 1) pi)`,
/// ascending. These index the even eigenfunctions.
pub fn kl_even_roots(l: f64, count: usize) -> Result<Vec<f64>> {
    check_length(l)?;
    let pi = std::f64::consts::PI;
    let f = |z: f64| (z / 2.0).cos() - l * z * (z / 2.0).sin();
    (0..count)
        .map(|k| bisect(f, 2.0 * k as f64 * pi, (2 * k + 1) as f64 * pi))
        .collect()
}

/// The first `count` eigenpairs in decreasing eigenvalue order.
pub fn kl_modes(l: f64, count: usize) -> Result<Vec<KlMode>> {
    let even = kl_even_roots(l, count.div_ceil(2))?;
    let odd = kl_roots(l, count / 2)?;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let m = if k % 2 == 0 {
            KlMode::new(Parity::Even, even[k / 2], l)
        } else {
            KlMode::new(Parity::Odd, odd[k / 2], l)
        };
        out.push(m);
    }
    Ok(out)
}

/// Parameters of a uniform random field `mean + sqrt(3) delta sum_j g_j(x) xi_j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlSpec {
    pub mean: f64,
    pub delta: f64,
    pub corr_len: f64,
}

/// Random field on an interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlField1d {
    pub spec: KlSpec,
    pub center: f64,
    pub modes: Vec<KlMode>,
}

impl KlField1d {
    pub fn new(spec: KlSpec, center: f64, terms: usize) -> Result<Self> {
        Ok(Self {
            spec,
            center,
            modes: kl_modes(spec.corr_len, terms)?,
        })
    }

    pub fn terms(&self) -> usize {
        self.modes.len()
    }

    /// `g_j(x)` or its derivatives.
    pub fn mode(&self, j: usize, x: f64, der: usize) -> f64 {
        self.modes[j].eval(x - self.center, der)
    }

    /// Field value (`der = 0`) or derivative at `x`.
    pub fn eval(&self, x: f64, xi: &[f64], der: usize) -> f64 {
        let base = if der == 0 { self.spec.mean } else { 0.0 };
        base + SQRT3
            * self.spec.delta
            * xi.iter()
                .enumerate()
                .map(|(j, v)| v * self.mode(j, x, der))
                .sum::<f64>()
    }
}

/// Separable random field on a unit square with modes `g_a(x1) g_b(x2)`
/// ordered by decreasing product eigenvalue, ties by `(a + b, a, b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlField2d {
    pub spec: KlSpec,
    pub center: [f64; 2],
    pub modes: Vec<(KlMode, KlMode)>,
}

impl KlField2d {
    pub fn new(spec: KlSpec, center: [f64; 2], terms: usize) -> Result<Self> {
        let base = kl_modes(spec.corr_len, terms + 2)?;
        let mut pairs = Vec::with_capacity(base.len() * base.len());
        for a in 0..base.len() {
            for b in 0..base.len() {
                pairs.push((a, b));
            }
        }
        pairs.sort_by(|&(a, b), &(c, d)| {
            let pab = base[a].lambda * base[b].lambda;
            let pcd = base[c].lambda * base[d].lambda;
            pcd.total_cmp(&pab).then((a + b).cmp(&(c + d))).then(a.cmp(&c)).then(b.cmp(&d))
        });
        Ok(Self {
            spec,
            center,
            modes: pairs.into_iter().take(terms).map(|(a, b)| (base[a], base[b])).collect(),
        })
    }

    pub fn terms(&self) -> usize {
        self.modes.len()
    }

    /// Product eigenvalue of mode `j`.
    pub fn eigenvalue(&self, j: usize) -> f64 {
        self.modes[j].0.lambda * self.modes[j].1.lambda
    }

    /// Partial derivative `d^(d1+d2) / dx1^d1 dx2^d2` of mode `j`.
    pub fn mode(&self, j: usize, x: [f64; 2], d1: usize, d2: usize) -> f64 {
        let (a, b) = &self.modes[j];
        a.eval(x[0] - self.center[0], d1) * b.eval(x[1] - self.center[1], d2)
    }

    pub fn eval(&self, x: [f64; 2], xi: &[f64], d1: usize, d2: usize) -> f64 {
        let base = if d1 == 0 && d2 == 0 { self.spec.mean } else { 0.0 };
        base + SQRT3
            * self.spec.delta
            * xi.iter()
                .enumerate()
                .map(|(j, v)| v * self.mode(j, x, d1, d2))
                .sum::<f64>()
    }

    /// Field values from precomputed mode values `modes[j]` at one point.
    pub fn combine(&self, modes: &[f64], xi: &[f64]) -> f64 {
        SQRT3 * self.spec.delta * modes.iter().zip(xi).map(|(g, v)| g * v).sum::<f64>()
    }
}
