use ndarray::{linalg::general_mat_mul, Array2, ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffnet::Bundle;
use crate::error::{Error, Result};

const LEAKY_SLOPE: f64 = 0.2;

/// Shape of a latent-to-map decoder: a linear layer to an initial
/// `initial_size² × initial_channels` map, then one (bilinear ×2, 3×3 conv,
/// leaky ReLU) block per entry of `stage_channels`, then a 3×3 conv to
/// `out_channels`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderSpec {
    pub latent_dim: usize,
    pub initial_size: usize,
    pub initial_channels: usize,
    pub stage_channels: Vec<usize>,
    pub out_channels: usize,
}

impl Default for DecoderSpec {
    /// 8×8×128 up to 64×64×18.
    fn default() -> Self {
        DecoderSpec {
            latent_dim: 16,
            initial_size: 8,
            initial_channels: 128,
            stage_channels: vec![64, 32, 16],
            out_channels: 18,
        }
    }
}

impl DecoderSpec {
    /// 8×8×128 up to 256×256×18.
    pub fn full_scale() -> Self {
        DecoderSpec {
            stage_channels: vec![128, 64, 32, 32, 16],
            ..Default::default()
        }
    }

    pub fn output_size(&self) -> usize {
        self.initial_size << self.stage_channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0
            || self.initial_size == 0
            || self.initial_channels == 0
            || self.out_channels == 0
            || self.stage_channels.contains(&0)
        {
            return Err(Error::validation("decoder dimensions must be positive"));
        }
        Ok(())
    }

    fn convs(&self) -> Vec<(usize, usize)> {
        let mut c = self.initial_channels;
        let mut out = Vec::new();
        for &s in &self.stage_channels {
            out.push((c, s));
            c = s;
        }
        out.push((c, self.out_channels));
        out
    }

    fn initial_len(&self) -> usize {
        self.initial_channels * self.initial_size * self.initial_size
    }

    pub fn param_count(&self) -> usize {
        let lin = self.latent_dim * self.initial_len() + self.initial_len();
        lin + self.convs().iter().map(|(i, o)| o * i * 9 + o).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvDecoder {
    spec: DecoderSpec,
    params: Vec<f64>,
}

/// Intermediate values kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct ConvTape {
    z: Vec<f64>,
    lin_pre: Vec<f64>,
    /// Per conv: im2col matrix of its input and its spatial size.
    cols: Vec<(Array2<f64>, usize)>,
    /// Per hidden conv: pre-activation output.
    conv_pre: Vec<Array2<f64>>,
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn leaky_deriv(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Source indices and weights for bilinear ×2 upsampling along one axis
/// (half-pixel centers, edge clamped).
fn upsample_taps(n: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * n)
        .map(|o| {
            let s = ((o as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// `(C, n²)` map to `(C, (2n)²)`.
fn upsample(x: &Array2<f64>, n: usize) -> Array2<f64> {
    let taps = upsample_taps(n);
    let m = 2 * n;
    let mut out = Array2::zeros((x.nrows(), m * m));
    for (c, row) in x.rows().into_iter().enumerate() {
        let src = row.as_slice().unwrap();
        let dst = out.row_mut(c).into_slice().unwrap();
        for (oy, &(y0, y1, wy)) in taps.iter().enumerate() {
            for (ox, &(x0, x1, wx)) in taps.iter().enumerate() {
                let top = src[y0 * n + x0] * (1.0 - wx) + src[y0 * n + x1] * wx;
                let bot = src[y1 * n + x0] * (1.0 - wx) + src[y1 * n + x1] * wx;
                dst[oy * m + ox] = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    out
}

fn upsample_adjoint(d: &Array2<f64>, n: usize) -> Array2<f64> {
    let taps = upsample_taps(n);
    let m = 2 * n;
    let mut out = Array2::zeros((d.nrows(), n * n));
    for (c, row) in d.rows().into_iter().enumerate() {
        let src = row.as_slice().unwrap();
        let dst = out.row_mut(c).into_slice().unwrap();
        for (oy, &(y0, y1, wy)) in taps.iter().enumerate() {
            for (ox, &(x0, x1, wx)) in taps.iter().enumerate() {
                let g = src[oy * m + ox];
                dst[y0 * n + x0] += g * (1.0 - wy) * (1.0 - wx);
                dst[y0 * n + x1] += g * (1.0 - wy) * wx;
                dst[y1 * n + x0] += g * wy * (1.0 - wx);
                dst[y1 * n + x1] += g * wy * wx;
            }
        }
    }
    out
}

/// `(C, n²)` to `(9C, n²)` patches for a zero-padded 3×3 convolution.
fn im2col(x: &Array2<f64>, n: usize) -> Array2<f64> {
    let c_in = x.nrows();
    let mut cols = Array2::zeros((c_in * 9, n * n));
    for c in 0..c_in {
        let src = x.row(c);
        let src = src.as_slice().unwrap();
        for ky in 0..3 {
            for kx in 0..3 {
                let mut dst = cols.row_mut(c * 9 + ky * 3 + kx);
                let dst = dst.as_slice_mut().unwrap();
                for y in 0..n {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= n as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    for xx in 0..n {
                        let sx = xx as isize + kx as isize - 1;
                        if sx >= 0 && sx < n as isize {
                            dst[y * n + xx] = src[sy * n + sx as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &Array2<f64>, c_in: usize, n: usize) -> Array2<f64> {
    let mut x = Array2::zeros((c_in, n * n));
    for c in 0..c_in {
        let mut dst = x.row_mut(c);
        let dst = dst.as_slice_mut().unwrap();
        for ky in 0..3 {
            for kx in 0..3 {
                let src = cols.row(c * 9 + ky * 3 + kx);
                let src = src.as_slice().unwrap();
                for y in 0..n {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= n as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    for xx in 0..n {
                        let sx = xx as isize + kx as isize - 1;
                        if sx >= 0 && sx < n as isize {
                            dst[sy * n + sx as usize] += src[y * n + xx];
                        }
                    }
                }
            }
        }
    }
    x
}

struct Offsets {
    lin_w: usize,
    lin_b: usize,
    /// `(weight, bias, c_in, c_out)` per conv.
    convs: Vec<(usize, usize, usize, usize)>,
}

impl ConvDecoder {
    /// He-uniform weights for leaky layers, Glorot for the output conv,
    /// zero biases.
    pub fn new(spec: DecoderSpec, seed: u64) -> Result<Self> {
        let mut dec = ConvDecoder::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let off = dec.offsets();
        let bound = (6.0 / dec.spec.latent_dim as f64).sqrt();
        for w in &mut dec.params[off.lin_w..off.lin_b] {
            *w = rng.random_range(-bound..=bound);
        }
        let last = off.convs.len() - 1;
        for (i, &(w, b, ci, co)) in off.convs.iter().enumerate() {
            let fan_in = (ci * 9) as f64;
            let bound = if i == last {
                (6.0 / (fan_in + (co * 9) as f64)).sqrt()
            } else {
                (6.0 / fan_in).sqrt()
            };
            for v in &mut dec.params[w..b] {
                *v = rng.random_range(-bound..=bound);
            }
        }
        Ok(dec)
    }

    pub fn zeros(spec: DecoderSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.param_count();
        Ok(ConvDecoder {
            spec,
            params: vec![0.0; n],
        })
    }

    pub fn spec(&self) -> &DecoderSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn offsets(&self) -> Offsets {
        let s = &self.spec;
        let lin_w = 0;
        let lin_b = s.latent_dim * s.initial_len();
        let mut at = lin_b + s.initial_len();
        let convs = s
            .convs()
            .into_iter()
            .map(|(ci, co)| {
                let w = at;
                let b = w + co * ci * 9;
                at = b + co;
                (w, b, ci, co)
            })
            .collect();
        Offsets { lin_w, lin_b, convs }
    }

    /// Output map, `out_channels × (size·size)` flattened row-major.
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_tape(z)?.0)
    }

    pub fn forward_tape(&self, z: &[f64]) -> Result<(Vec<f64>, ConvTape)> {
        let s = &self.spec;
        if z.len() != s.latent_dim {
            return Err(Error::validation(format!(
                "latent has {} entries, decoder expects {}",
                z.len(),
                s.latent_dim
            )));
        }
        let off = self.offsets();
        let l = s.initial_len();
        let w = ArrayView2::from_shape((s.latent_dim, l), &self.params[off.lin_w..off.lin_b]).unwrap();
        let mut lin_pre = self.params[off.lin_b..off.lin_b + l].to_vec();
        for (zi, row) in z.iter().zip(w.rows()) {
            for (o, wv) in lin_pre.iter_mut().zip(row) {
                *o += zi * wv;
            }
        }
        let mut x = Array2::from_shape_vec((s.initial_channels, s.initial_size * s.initial_size), lin_pre.iter().map(|&v| leaky(v)).collect())
            .unwrap();
        let mut n = s.initial_size;
        let mut cols = Vec::new();
        let mut conv_pre = Vec::new();
        let last = off.convs.len() - 1;
        for (i, &(wo, bo, ci, co)) in off.convs.iter().enumerate() {
            if i < last {
                x = upsample(&x, n);
                n *= 2;
            }
            let c = im2col(&x, n);
            let wm = ArrayView2::from_shape((co, ci * 9), &self.params[wo..bo]).unwrap();
            let mut y = Array2::zeros((co, n * n));
            general_mat_mul(1.0, &wm, &c, 0.0, &mut y);
            for (mut row, b) in y.rows_mut().into_iter().zip(&self.params[bo..bo + co]) {
                row += *b;
            }
            cols.push((c, n));
            if i < last {
                conv_pre.push(y.clone());
                y.mapv_inplace(leaky);
            }
            x = y;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::numeric("decoder produced non-finite output"));
        }
        let out = x.into_raw_vec_and_offset().0;
        Ok((
            out,
            ConvTape {
                z: z.to_vec(),
                lin_pre,
                cols,
                conv_pre,
            },
        ))
    }

    /// Reverse pass for `d_out = ∂L/∂output`. Accumulates parameter
    /// gradients into `grad` when given and returns `∂L/∂z`.
    pub fn backward(&self, tape: &ConvTape, d_out: &[f64], grad: Option<&mut [f64]>) -> Result<Vec<f64>> {
        let s = &self.spec;
        let size = s.output_size();
        if d_out.len() != s.out_channels * size * size {
            return Err(Error::validation("output adjoint has the wrong length"));
        }
        if let Some(g) = grad.as_ref() {
            if g.len() != self.params.len() {
                return Err(Error::validation("gradient buffer has wrong length"));
            }
        }
        let mut grad = grad;
        let off = self.offsets();
        let mut d = Array2::from_shape_vec((s.out_channels, size * size), d_out.to_vec()).unwrap();
        let last = off.convs.len() - 1;
        for i in (0..off.convs.len()).rev() {
            let (wo, bo, ci, co) = off.convs[i];
            let (ref c, n) = tape.cols[i];
            if i < last {
                ndarray::Zip::from(&mut d).and(&tape.conv_pre[i]).for_each(|g, &p| *g *= leaky_deriv(p));
            }
            if let Some(g) = grad.as_deref_mut() {
                let mut gw = ArrayViewMut2::from_shape((co, ci * 9), &mut g[wo..bo]).unwrap();
                general_mat_mul(1.0, &d, &c.t(), 1.0, &mut gw);
                for (gb, row) in g[bo..bo + co].iter_mut().zip(d.rows()) {
                    *gb += row.sum();
                }
            }
            let wm = ArrayView2::from_shape((co, ci * 9), &self.params[wo..bo]).unwrap();
            let mut dc = Array2::zeros((ci * 9, n * n));
            general_mat_mul(1.0, &wm.t(), &d, 0.0, &mut dc);
            d = col2im(&dc, ci, n);
            if i < last {
                d = upsample_adjoint(&d, n / 2);
            }
        }
        let l = s.initial_len();
        let d_lin: Vec<f64> = d
            .iter()
            .zip(&tape.lin_pre)
            .map(|(g, p)| g * leaky_deriv(*p))
            .collect();
        let w = ArrayView2::from_shape((s.latent_dim, l), &self.params[off.lin_w..off.lin_b]).unwrap();
        let dz = w.rows().into_iter().map(|row| row.iter().zip(&d_lin).map(|(a, b)| a * b).sum()).collect();
        if let Some(g) = grad {
            for (k, zk) in tape.z.iter().enumerate() {
                for (gv, dv) in g[off.lin_w + k * l..off.lin_w + (k + 1) * l].iter_mut().zip(&d_lin) {
                    *gv += zk * dv;
                }
            }
            for (gv, dv) in g[off.lin_b..off.lin_b + l].iter_mut().zip(&d_lin) {
                *gv += dv;
            }
        }
        Ok(dz)
    }

    pub fn write_into(&self, prefix: &str, b: &mut Bundle) -> Result<()> {
        b.set_meta(&format!("{prefix}.spec"), &self.spec)?;
        b.push_array(format!("{prefix}.params"), self.params.clone());
        Ok(())
    }

    pub fn read_from(b: &Bundle, prefix: &str) -> Result<Self> {
        let spec: DecoderSpec = b.meta_value(&format!("{prefix}.spec"))?;
        let mut dec = ConvDecoder::zeros(spec)?;
        let p = b.array(&format!("{prefix}.params"))?;
        if p.len() != dec.params.len() {
            return Err(Error::Format("decoder parameter count does not match its spec".into()));
        }
        dec.params.copy_from_slice(p);
        Ok(dec)
    }
}
