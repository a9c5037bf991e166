//! Central finite-difference Hessians of maps R³ → R³.
//!
//! The stencil uses 19 evaluations: the center, ±h along each axis and the
//! four diagonal corners of each coordinate plane. Every Hessian entry is a
//! fixed linear combination of those evaluations, so the transpose of that
//! combination ([`HessianStencil::adjoint`]) carries adjoints back to the
//! stencil outputs and from there through any first-order reverse pass.

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const STENCIL_SIZE: usize = 19;

/// `h[c][i][j] = ∂²f_c / ∂y_i ∂y_j`.
pub type Hessian3 = [[[f64; 3]; 3]; 3];

pub fn frobenius_sq(h: &Hessian3) -> f64 {
    h.iter().flatten().flatten().map(|v| v * v).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianStencil {
    pub h: f64,
}

const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

impl HessianStencil {
    pub fn new(h: f64) -> Result<Self> {
        if !(1e-5..=1e-2).contains(&h) {
            return Err(Error::validation(format!("finite-difference step {h} outside [1e-5, 1e-2]")));
        }
        Ok(HessianStencil { h })
    }

    /// Evaluation points, in the order [`combine`](Self::combine) expects:
    /// center, then (+e_i, −e_i) for i = 0..3, then for each pair (i, j) the
    /// corners (+,+), (+,−), (−,+), (−,−).
    pub fn points(&self, y: &Vec3) -> [Vec3; STENCIL_SIZE] {
        let h = self.h;
        let mut out = [*y; STENCIL_SIZE];
        for i in 0..3 {
            out[1 + 2 * i][i] += h;
            out[2 + 2 * i][i] -= h;
        }
        for (p, &(i, j)) in PAIRS.iter().enumerate() {
            let base = 7 + 4 * p;
            for (k, (si, sj)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)].into_iter().enumerate() {
                out[base + k][i] += si * h;
                out[base + k][j] += sj * h;
            }
        }
        out
    }

    pub fn combine(&self, values: &[Vec3; STENCIL_SIZE]) -> Hessian3 {
        let h2 = self.h * self.h;
        let mut out = [[[0.0; 3]; 3]; 3];
        for c in 0..3 {
            let f0 = values[0][c];
            for i in 0..3 {
                out[c][i][i] = (values[1 + 2 * i][c] - 2.0 * f0 + values[2 + 2 * i][c]) / h2;
            }
            for (p, &(i, j)) in PAIRS.iter().enumerate() {
                let b = 7 + 4 * p;
                let v = (values[b][c] - values[b + 1][c] - values[b + 2][c] + values[b + 3][c]) / (4.0 * h2);
                out[c][i][j] = v;
                out[c][j][i] = v;
            }
        }
        out
    }

    /// Transpose of [`combine`](Self::combine): maps `∂L/∂H` to `∂L/∂values`.
    pub fn adjoint(&self, d_h: &Hessian3) -> [Vec3; STENCIL_SIZE] {
        let h2 = self.h * self.h;
        let mut out = [Vec3::zeros(); STENCIL_SIZE];
        for c in 0..3 {
            for i in 0..3 {
                let d = d_h[c][i][i] / h2;
                out[1 + 2 * i][c] += d;
                out[2 + 2 * i][c] += d;
                out[0][c] -= 2.0 * d;
            }
            for (p, &(i, j)) in PAIRS.iter().enumerate() {
                let b = 7 + 4 * p;
                // The off-diagonal value fills both (i, j) and (j, i).
                let d = (d_h[c][i][j] + d_h[c][j][i]) / (4.0 * h2);
                out[b][c] += d;
                out[b + 1][c] -= d;
                out[b + 2][c] -= d;
                out[b + 3][c] += d;
            }
        }
        out
    }
}

/// Hessian tensor of `f` at `y` by central differences with step `h`.
pub fn hessian_input<F>(f: F, y: &Vec3, h: f64) -> Result<Hessian3>
where
    F: Fn(&Vec3) -> Result<Vec3>,
{
    let stencil = HessianStencil::new(h)?;
    let pts = stencil.points(y);
    let mut values = [Vec3::zeros(); STENCIL_SIZE];
    for (v, p) in values.iter_mut().zip(pts.iter()) {
        *v = f(p)?;
        if !v.iter().all(|c| c.is_finite()) {
            return Err(Error::numeric(format!("non-finite evaluation at {p:?}")));
        }
    }
    Ok(stencil.combine(&values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_map_has_zero_hessian() {
        let f = |y: &Vec3| Ok(Vec3::new(2.0 * y.x - y.y + 0.5, y.z * 3.0, 1.0 + y.x + y.y + y.z));
        let h = hessian_input(f, &Vec3::new(0.3, -0.7, 0.2), 1e-3).unwrap();
        assert!(h.iter().flatten().flatten().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn square_of_first_coordinate() {
        let f = |y: &Vec3| Ok(Vec3::new(y.x * y.x, 0.0, 0.0));
        let h = hessian_input(f, &Vec3::new(0.4, 0.1, -0.3), 1e-3).unwrap();
        assert!((h[0][0][0] - 2.0).abs() < 1e-4);
        let rest: f64 = frobenius_sq(&h) - h[0][0][0] * h[0][0][0];
        assert!(rest.abs() < 1e-8);
    }

    #[test]
    fn mixed_partials() {
        let f = |y: &Vec3| Ok(Vec3::new(y.x * y.y, y.y * y.z * 2.0, y.x * y.z));
        let h = hessian_input(f, &Vec3::new(0.4, 0.1, -0.3), 1e-3).unwrap();
        assert!((h[0][0][1] - 1.0).abs() < 1e-6 && (h[0][1][0] - 1.0).abs() < 1e-6);
        assert!((h[1][1][2] - 2.0).abs() < 1e-6);
        assert!((h[2][0][2] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn adjoint_is_transpose_of_combine() {
        let s = HessianStencil::new(1e-3).unwrap();
        let mut vals = [Vec3::zeros(); STENCIL_SIZE];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = Vec3::new((k as f64).sin(), (k as f64 * 0.7).cos(), k as f64 * 0.01);
        }
        let mut dh = [[[0.0; 3]; 3]; 3];
        for c in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    dh[c][i][j] = ((c * 9 + i * 3 + j) as f64).sin();
                }
            }
        }
        let h = s.combine(&vals);
        let lhs: f64 = h.iter().flatten().flatten().zip(dh.iter().flatten().flatten()).map(|(a, b)| a * b).sum();
        let adj = s.adjoint(&dh);
        let rhs: f64 = adj.iter().zip(vals.iter()).map(|(a, v)| a.dot(v)).sum();
        assert!((lhs - rhs).abs() < 1e-6 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn step_out_of_range() {
        assert!(HessianStencil::new(1.0).is_err());
        assert!(HessianStencil::new(1e-7).is_err());
    }
}
