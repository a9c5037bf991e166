use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const DEFAULT_DEGREE: usize = 5;

/// Legendre polynomials on `[-1, 1]` scaled to unit L² norm,
/// `P̂_n = P_n · √((2n + 1) / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegendreBasis {
    pub degree: usize,
}

impl Default for LegendreBasis {
    fn default() -> Self {
        LegendreBasis { degree: DEFAULT_DEGREE }
    }
}

/// Unnormalized `P_0..=P_degree` at `t` by the three-term recurrence.
pub fn legendre_values(degree: usize, t: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(degree + 1);
    p.push(1.0);
    if degree >= 1 {
        p.push(t);
    }
    for n in 1..degree {
        let nf = n as f64;
        p.push(((2.0 * nf + 1.0) * t * p[n] - nf * p[n - 1]) / (nf + 1.0));
    }
    p
}

/// Gauss–Legendre nodes and weights with `n` points (exact for degree `2n − 1`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-like initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let p = legendre_values(n, x);
            let (pn, pn1) = (p[n], if n >= 1 { p[n - 1] } else { 0.0 });
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `n` parameters spread uniformly over `[-1, 1]` (endpoints included).
pub fn uniform_params(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect(),
    }
}

impl LegendreBasis {
    pub fn new(degree: usize) -> Self {
        LegendreBasis { degree }
    }

    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        if !(-1.0..=1.0).contains(&t) {
            return Err(Error::validation(format!("basis parameter {t} outside [-1, 1]")));
        }
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: f64) -> Vec<f64> {
        legendre_values(self.degree, t)
            .into_iter()
            .enumerate()
            .map(|(n, p)| p * ((2 * n + 1) as f64 / 2.0).sqrt())
            .collect()
    }

    /// Gram matrix `∫ P̂_n P̂_m dt` by Gauss–Legendre quadrature of `order` points.
    pub fn gram(&self, order: usize) -> DMatrix<f64> {
        let (x, w) = gauss_legendre(order);
        let mut g = DMatrix::zeros(self.len(), self.len());
        for (xi, wi) in x.iter().zip(&w) {
            let v = self.eval_unchecked(*xi);
            for n in 0..self.len() {
                for m in 0..self.len() {
                    g[(n, m)] += wi * v[n] * v[m];
                }
            }
        }
        g
    }

    /// `rows × len` design matrix at the given parameters.
    pub fn design(&self, ts: &[f64]) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(ts.len(), self.len());
        for (i, t) in ts.iter().enumerate() {
            for (n, v) in self.eval_unchecked(*t).into_iter().enumerate() {
                a[(i, n)] = v;
            }
        }
        a
    }
}

/// Polynomial coefficients of a strand, one 3-vector (x, y, z) per degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrandCoeffs {
    pub coeffs: Vec<Vec3>,
}

impl StrandCoeffs {
    pub fn zeros(basis: &LegendreBasis) -> Self {
        StrandCoeffs {
            coeffs: vec![Vec3::zeros(); basis.len()],
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Channel-major flat layout: all x coefficients, then y, then z.
    pub fn to_channels(&self) -> Vec<f64> {
        (0..3).flat_map(|a| self.coeffs.iter().map(move |c| c[a])).collect()
    }

    pub fn from_channels(ch: &[f64]) -> Result<Self> {
        if ch.len() % 3 != 0 || ch.is_empty() {
            return Err(Error::validation("coefficient channel count must be a positive multiple of 3"));
        }
        let n = ch.len() / 3;
        Ok(StrandCoeffs {
            coeffs: (0..n).map(|d| Vec3::new(ch[d], ch[n + d], ch[2 * n + d])).collect(),
        })
    }

    /// Frobenius distance between coefficient matrices.
    pub fn distance(&self, other: &StrandCoeffs) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

/// Velocity samples `(p_{i+1} − p_i) · (K − 1)/2` of a strand whose first
/// point is the root.
fn velocities(points: &[Vec3]) -> Vec<Vec3> {
    let scale = (points.len() - 1) as f64 / 2.0;
    points.windows(2).map(|w| (w[1] - w[0]) * scale).collect()
}

/// Least-squares fit of the strand's relative offsets, per axis, at uniform
/// parameters. Offsets are scaled by `(K − 1)/2` so they approximate the
/// derivative with respect to `t`, which makes the coefficients independent
/// of the control-point count.
pub fn encode_points(points: &[Vec3], basis: &LegendreBasis) -> Result<StrandCoeffs> {
    if points.len() < basis.len() + 1 {
        return Err(Error::validation(format!(
            "{} control points cannot determine a degree-{} fit (need at least {})",
            points.len(),
            basis.degree,
            basis.len() + 1
        )));
    }
    if !points.iter().all(|p| p.iter().all(|v| v.is_finite())) {
        return Err(Error::validation("strand has non-finite control points"));
    }
    let v = velocities(points);
    let a = basis.design(&uniform_params(v.len()));
    let qr = a.clone().qr();
    let r = qr.r();
    let qt = qr.q().transpose();
    let mut coeffs = vec![Vec3::zeros(); basis.len()];
    for axis in 0..3 {
        let b = DVector::from_iterator(v.len(), v.iter().map(|p| p[axis]));
        let rhs = &qt * b;
        let x = r
            .solve_upper_triangular(&rhs)
            .ok_or_else(|| Error::numeric("singular Legendre design matrix"))?;
        for (n, c) in coeffs.iter_mut().enumerate() {
            c[axis] = x[n];
        }
    }
    Ok(StrandCoeffs { coeffs })
}

/// Evaluates `k` control points: the root at the origin followed by the
/// cumulative sum of `k − 1` offsets sampled uniformly in `t`.
pub fn decode_points(coeffs: &StrandCoeffs, k: usize, basis: &LegendreBasis) -> Result<Vec<Vec3>> {
    if k < 2 {
        return Err(Error::validation("a strand needs at least 2 control points"));
    }
    if coeffs.coeffs.len() != basis.len() {
        return Err(Error::validation("coefficient degree does not match the basis"));
    }
    let step = 2.0 / (k - 1) as f64;
    let mut out = Vec::with_capacity(k);
    let mut p = Vec3::zeros();
    out.push(p);
    for t in uniform_params(k - 1) {
        let b = basis.eval_unchecked(t);
        let v: Vec3 = coeffs.coeffs.iter().zip(&b).map(|(c, w)| c * *w).sum();
        p += v * step;
        out.push(p);
    }
    Ok(out)
}
