//! Reconstruction, landmark and Hessian-regularization losses with their
//! parameter gradients. Each loss takes a `weight`; when a gradient buffer is
//! passed, `weight · ∂loss/∂θ` is accumulated into it and the unweighted loss
//! is returned.

use ndarray::Array2;

use super::pair::{to_rows, EmbeddingPair, PairGrad};
use crate::diffnet::{frobenius_sq, Hessian3, HessianStencil, STENCIL_SIZE};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// `Σᵢ ‖xᵢ − g(f(xᵢ, c), c)‖₂` over one surface's samples.
pub fn loss_rec(
    pair: &EmbeddingPair,
    xs: &[Vec3],
    code_id: &str,
    weight: f64,
    grad: Option<&mut PairGrad>,
) -> Result<f64> {
    let code = pair.code(code_id)?;
    let x = to_rows(xs);
    let enc = pair.encode_forward(x.view(), &code)?;
    let dec = pair.decode_forward(enc.y.view(), &code)?;
    let mut loss = 0.0;
    let mut d_out = Array2::zeros((xs.len(), 3));
    for i in 0..xs.len() {
        let r = Vec3::new(
            x[[i, 0]] - dec.out[[i, 0]],
            x[[i, 1]] - dec.out[[i, 1]],
            x[[i, 2]] - dec.out[[i, 2]],
        );
        let n = r.norm();
        loss += n;
        if n > 0.0 {
            for k in 0..3 {
                d_out[[i, k]] = -weight * r[k] / n;
            }
        }
    }
    if let Some(g) = grad {
        let d_y = pair.decode_backward(&dec, &d_out, Some(g))?;
        pair.encode_backward(&enc, &d_y, Some(g))?;
    }
    Ok(loss)
}

/// `Σᵢ ‖f(P_tᵢ, c_t) − f(P_sᵢ, c_s)‖₂`.
pub fn loss_lmks(
    pair: &EmbeddingPair,
    p_t: &[Vec3],
    id_t: &str,
    p_s: &[Vec3],
    id_s: &str,
    weight: f64,
    grad: Option<&mut PairGrad>,
) -> Result<f64> {
    if p_t.len() != p_s.len() {
        return Err(Error::validation(format!(
            "landmark lists differ in length: {} vs {}",
            p_t.len(),
            p_s.len()
        )));
    }
    let (ct, cs) = (pair.code(id_t)?, pair.code(id_s)?);
    if p_t.is_empty() {
        return Ok(0.0);
    }
    let et = pair.encode_forward(to_rows(p_t).view(), &ct)?;
    let es = pair.encode_forward(to_rows(p_s).view(), &cs)?;
    let mut loss = 0.0;
    let mut d_t = Array2::zeros((p_t.len(), 3));
    for i in 0..p_t.len() {
        let d = Vec3::new(
            et.y[[i, 0]] - es.y[[i, 0]],
            et.y[[i, 1]] - es.y[[i, 1]],
            et.y[[i, 2]] - es.y[[i, 2]],
        );
        let n = d.norm();
        loss += n;
        if n > 0.0 {
            for k in 0..3 {
                d_t[[i, k]] = weight * d[k] / n;
            }
        }
    }
    if let Some(g) = grad {
        pair.encode_backward(&et, &d_t, Some(g))?;
        pair.encode_backward(&es, &(-&d_t), Some(g))?;
    }
    Ok(loss)
}

/// Finite-difference Hessians of `g(·, c)` at each sphere point.
pub fn decoder_hessians(pair: &EmbeddingPair, ys: &[Vec3], code_id: &str, h: f64) -> Result<Vec<Hessian3>> {
    let code = pair.code(code_id)?;
    let stencil = HessianStencil::new(h)?;
    let pts: Vec<Vec3> = ys.iter().flat_map(|y| stencil.points(y)).collect();
    let out = pair.decode_with_code(&pts, &code)?;
    Ok(out
        .chunks_exact(STENCIL_SIZE)
        .map(|c| stencil.combine(c.try_into().unwrap()))
        .collect())
}

/// `Σ ‖H_g(y)‖_F²` over the sphere points, Hessians by central differences.
pub fn loss_reg(
    pair: &EmbeddingPair,
    ys: &[Vec3],
    code_id: &str,
    h: f64,
    weight: f64,
    grad: Option<&mut PairGrad>,
) -> Result<f64> {
    let code = pair.code(code_id)?;
    let stencil = HessianStencil::new(h)?;
    let pts: Vec<Vec3> = ys.iter().flat_map(|y| stencil.points(y)).collect();
    let dec = pair.decode_forward(to_rows(&pts).view(), &code)?;
    let mut loss = 0.0;
    let mut d_out = Array2::zeros((pts.len(), 3));
    for p in 0..ys.len() {
        let mut vals = [Vec3::zeros(); STENCIL_SIZE];
        for (k, v) in vals.iter_mut().enumerate() {
            let r = p * STENCIL_SIZE + k;
            *v = Vec3::new(dec.out[[r, 0]], dec.out[[r, 1]], dec.out[[r, 2]]);
        }
        let hess = stencil.combine(&vals);
        loss += frobenius_sq(&hess);
        if grad.is_some() {
            let mut d_h = hess;
            d_h.iter_mut().flatten().flatten().for_each(|v| *v *= 2.0 * weight);
            for (k, a) in stencil.adjoint(&d_h).iter().enumerate() {
                let r = p * STENCIL_SIZE + k;
                for c in 0..3 {
                    d_out[[r, c]] = a[c];
                }
            }
        }
    }
    if let Some(g) = grad {
        pair.decode_backward(&dec, &d_out, Some(g))?;
    }
    Ok(loss)
}
