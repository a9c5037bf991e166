use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffnet::{Activation, Bundle, DenseNet, NetSpec, Tape};
use crate::error::{Error, Result};
use crate::geometry::{icosphere, TriMesh, Vec3};

pub const CODE_DIM: usize = 3;

/// Which function family backs the encoder/decoder residual nets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NetKind {
    Siren,
    /// ReLU MLP ablation.
    ReluMlp,
    /// ReLU MLP behind a random Fourier embedding of the input.
    ReluFourier { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub kind: NetKind,
    pub hidden_width: usize,
    pub depth: usize,
    pub modulator_width: usize,
    pub modulator_depth: usize,
    #[serde(default = "default_omega")]
    pub omega0: f64,
}

fn default_omega() -> f64 {
    30.0
}

impl Default for ArchConfig {
    /// Five hidden layers of 128 units for all four networks.
    fn default() -> Self {
        ArchConfig {
            kind: NetKind::Siren,
            hidden_width: 128,
            depth: 5,
            modulator_width: 128,
            modulator_depth: 5,
            omega0: 30.0,
        }
    }
}

impl ArchConfig {
    /// Reduced size for CPU runs.
    pub fn small(width: usize, depth: usize) -> Self {
        ArchConfig {
            hidden_width: width,
            depth,
            modulator_width: width,
            modulator_depth: depth,
            ..Default::default()
        }
    }

    pub fn with_kind(mut self, kind: NetKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn residual_spec(&self) -> NetSpec {
        let mut spec = NetSpec::siren(3, 3, self.hidden_width, self.depth);
        spec.omega0 = self.omega0;
        match self.kind {
            NetKind::Siren => spec,
            NetKind::ReluMlp => spec.with_activation(Activation::Relu),
            NetKind::ReluFourier { sigma } => spec.with_activation(Activation::Relu).with_fourier(64, sigma),
        }
    }

    pub fn modulator_spec(&self) -> NetSpec {
        NetSpec::siren(CODE_DIM, 3, self.modulator_width, self.modulator_depth).with_activation(Activation::Tanh)
    }
}

/// Encoder `f(x, c) = Π(x + S_e(x) ⊙ M_e(c))` and decoder
/// `g(y, c) = y + S_d(y) ⊙ M_d(c)` sharing a table of per-surface codes.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair {
    pub encoder: DenseNet,
    pub encoder_mod: DenseNet,
    pub decoder: DenseNet,
    pub decoder_mod: DenseNet,
    codes: BTreeMap<String, Vec3>,
}

/// Parameter gradients for the four networks of a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrad {
    pub encoder: Vec<f64>,
    pub encoder_mod: Vec<f64>,
    pub decoder: Vec<f64>,
    pub decoder_mod: Vec<f64>,
}

impl PairGrad {
    pub fn zeros(pair: &EmbeddingPair) -> Self {
        PairGrad {
            encoder: vec![0.0; pair.encoder.param_count()],
            encoder_mod: vec![0.0; pair.encoder_mod.param_count()],
            decoder: vec![0.0; pair.decoder.param_count()],
            decoder_mod: vec![0.0; pair.decoder_mod.param_count()],
        }
    }

    pub fn all_finite(&self) -> bool {
        [&self.encoder, &self.encoder_mod, &self.decoder, &self.decoder_mod]
            .iter()
            .all(|g| g.iter().all(|v| v.is_finite()))
    }
}

pub(crate) fn to_rows(points: &[Vec3]) -> Array2<f64> {
    Array2::from_shape_fn((points.len(), 3), |(i, k)| points[i][k])
}

pub(crate) fn from_rows(a: &Array2<f64>) -> Vec<Vec3> {
    a.rows().into_iter().map(|r| Vec3::new(r[0], r[1], r[2])).collect()
}

/// Code drawn from a standard normal truncated to ±2σ.
pub fn truncated_normal_code<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let mut c = Vec3::zeros();
    for k in 0..3 {
        c[k] = loop {
            let v: f64 = rng.sample(StandardNormal);
            if v.abs() <= 2.0 {
                break v;
            }
        };
    }
    c
}

/// Forward state of one modulator evaluation.
pub(crate) struct ModPass {
    pub value: Vec3,
    tape: Tape,
}

/// Forward state of a batched encoder evaluation.
pub(crate) struct EncodePass {
    tape: Tape,
    residual: Array2<f64>,
    modulation: ModPass,
    norms: Vec<f64>,
    pub y: Array2<f64>,
}

/// Forward state of a batched decoder evaluation.
pub(crate) struct DecodePass {
    tape: Tape,
    residual: Array2<f64>,
    modulation: ModPass,
    pub out: Array2<f64>,
}

fn modulate(net: &DenseNet, code: &Vec3) -> Result<ModPass> {
    let x = Array2::from_shape_vec((1, 3), vec![code.x, code.y, code.z]).unwrap();
    let (out, tape) = net.forward_tape(x.view())?;
    Ok(ModPass {
        value: Vec3::new(out[[0, 0]], out[[0, 1]], out[[0, 2]]),
        tape,
    })
}

fn modulation_value(net: &DenseNet, code: &Vec3) -> Result<Vec3> {
    let out = net.forward(code.as_slice())?;
    Ok(Vec3::new(out[0], out[1], out[2]))
}

/// Backward through a gated residual `S(x) ⊙ m`: returns `∂L/∂S(x)` and
/// accumulates `∂L/∂m` into the modulator gradient.
fn gate_backward(
    d_out: &Array2<f64>,
    residual: &Array2<f64>,
    modulation: &ModPass,
    mod_net: &DenseNet,
    mod_grad: Option<&mut [f64]>,
) -> Result<Array2<f64>> {
    let m = modulation.value;
    let mut d_res = d_out.clone();
    let mut dm = [0.0; 3];
    for (mut dr, r) in d_res.rows_mut().into_iter().zip(residual.rows()) {
        for k in 0..3 {
            dm[k] += dr[k] * r[k];
            dr[k] *= m[k];
        }
    }
    if let Some(g) = mod_grad {
        let dm = Array2::from_shape_vec((1, 3), dm.to_vec()).unwrap();
        mod_net.backward(&modulation.tape, dm.view(), Some(g))?;
    }
    Ok(d_res)
}

impl EmbeddingPair {
    pub fn new(arch: &ArchConfig, seed: u64) -> Result<Self> {
        Ok(EmbeddingPair {
            encoder: DenseNet::new(arch.residual_spec(), seed)?,
            encoder_mod: DenseNet::new(arch.modulator_spec(), seed.wrapping_add(1))?,
            decoder: DenseNet::new(arch.residual_spec(), seed.wrapping_add(2))?,
            decoder_mod: DenseNet::new(arch.modulator_spec(), seed.wrapping_add(3))?,
            codes: BTreeMap::new(),
        })
    }

    /// All network parameters zero: `f` is the pure projection and `g` the identity.
    pub fn zeros(arch: &ArchConfig) -> Result<Self> {
        Ok(EmbeddingPair {
            encoder: DenseNet::zeros(arch.residual_spec())?,
            encoder_mod: DenseNet::zeros(arch.modulator_spec())?,
            decoder: DenseNet::zeros(arch.residual_spec())?,
            decoder_mod: DenseNet::zeros(arch.modulator_spec())?,
            codes: BTreeMap::new(),
        })
    }

    pub fn add_code(&mut self, id: impl Into<String>, code: Vec3) {
        self.codes.insert(id.into(), code);
    }

    pub fn code(&self, id: &str) -> Result<Vec3> {
        self.codes.get(id).copied().ok_or_else(|| Error::UnknownCode(id.to_string()))
    }

    pub fn codes(&self) -> &BTreeMap<String, Vec3> {
        &self.codes
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count()
            + self.encoder_mod.param_count()
            + self.decoder.param_count()
            + self.decoder_mod.param_count()
    }

    pub(crate) fn encode_forward(&self, x: ArrayView2<f64>, code: &Vec3) -> Result<EncodePass> {
        let modulation = modulate(&self.encoder_mod, code)?;
        let (residual, tape) = self.encoder.forward_tape(x)?;
        let m = modulation.value;
        let mut y = Array2::zeros((x.nrows(), 3));
        let mut norms = Vec::with_capacity(x.nrows());
        for i in 0..x.nrows() {
            let u = Vec3::new(
                x[[i, 0]] + residual[[i, 0]] * m.x,
                x[[i, 1]] + residual[[i, 1]] * m.y,
                x[[i, 2]] + residual[[i, 2]] * m.z,
            );
            let n = u.norm();
            if !(n > 1e-12) || !n.is_finite() {
                return Err(Error::numeric(format!(
                    "sphere projection is singular for input ({}, {}, {}): x + residual has norm {n:e}",
                    x[[i, 0]],
                    x[[i, 1]],
                    x[[i, 2]]
                )));
            }
            for k in 0..3 {
                y[[i, k]] = u[k] / n;
            }
            norms.push(n);
        }
        Ok(EncodePass {
            tape,
            residual,
            modulation,
            norms,
            y,
        })
    }

    /// Accumulates parameter gradients given `∂L/∂y`; returns `∂L/∂x`.
    pub(crate) fn encode_backward(
        &self,
        pass: &EncodePass,
        d_y: &Array2<f64>,
        grad: Option<&mut PairGrad>,
    ) -> Result<Array2<f64>> {
        // y = u/|u|  ⇒  ∂L/∂u = (d − y (y·d)) / |u|
        let mut d_u = d_y.clone();
        for (i, mut row) in d_u.rows_mut().into_iter().enumerate() {
            let y = pass.y.row(i);
            let dot: f64 = (0..3).map(|k| y[k] * row[k]).sum();
            for k in 0..3 {
                row[k] = (row[k] - y[k] * dot) / pass.norms[i];
            }
        }
        let (g_net, g_mod) = match grad {
            Some(g) => (Some(&mut g.encoder[..]), Some(&mut g.encoder_mod[..])),
            None => (None, None),
        };
        let d_res = gate_backward(&d_u, &pass.residual, &pass.modulation, &self.encoder_mod, g_mod)?;
        let d_x = self.encoder.backward(&pass.tape, d_res.view(), g_net)?;
        Ok(d_x + d_u)
    }

    pub(crate) fn decode_forward(&self, y: ArrayView2<f64>, code: &Vec3) -> Result<DecodePass> {
        let modulation = modulate(&self.decoder_mod, code)?;
        let (residual, tape) = self.decoder.forward_tape(y)?;
        let m = modulation.value;
        let mut out = y.to_owned();
        for (mut o, r) in out.rows_mut().into_iter().zip(residual.rows()) {
            for k in 0..3 {
                o[k] += r[k] * m[k];
            }
        }
        Ok(DecodePass {
            tape,
            residual,
            modulation,
            out,
        })
    }

    pub(crate) fn decode_backward(
        &self,
        pass: &DecodePass,
        d_out: &Array2<f64>,
        grad: Option<&mut PairGrad>,
    ) -> Result<Array2<f64>> {
        let (g_net, g_mod) = match grad {
            Some(g) => (Some(&mut g.decoder[..]), Some(&mut g.decoder_mod[..])),
            None => (None, None),
        };
        let d_res = gate_backward(d_out, &pass.residual, &pass.modulation, &self.decoder_mod, g_mod)?;
        let d_y = self.decoder.backward(&pass.tape, d_res.view(), g_net)?;
        Ok(d_y + d_out)
    }

    fn encode_rows(&self, x: ArrayView2<f64>, code: &Vec3) -> Result<Array2<f64>> {
        let m = modulation_value(&self.encoder_mod, code)?;
        let residual = self.encoder.forward_batch(x)?;
        let mut y = Array2::zeros((x.nrows(), 3));
        for i in 0..x.nrows() {
            let u = Vec3::new(
                x[[i, 0]] + residual[[i, 0]] * m.x,
                x[[i, 1]] + residual[[i, 1]] * m.y,
                x[[i, 2]] + residual[[i, 2]] * m.z,
            );
            let n = u.norm();
            if !(n > 1e-12) || !n.is_finite() {
                return Err(Error::numeric(format!(
                    "sphere projection is singular for input ({}, {}, {}): x + residual has norm {n:e}",
                    x[[i, 0]],
                    x[[i, 1]],
                    x[[i, 2]]
                )));
            }
            for k in 0..3 {
                y[[i, k]] = u[k] / n;
            }
        }
        Ok(y)
    }

    fn decode_rows(&self, y: ArrayView2<f64>, code: &Vec3) -> Result<Array2<f64>> {
        let m = modulation_value(&self.decoder_mod, code)?;
        let residual = self.decoder.forward_batch(y)?;
        let mut out = y.to_owned();
        for (mut o, r) in out.rows_mut().into_iter().zip(residual.rows()) {
            for k in 0..3 {
                o[k] += r[k] * m[k];
            }
        }
        Ok(out)
    }

    /// `f(x, c)`: a point on the unit sphere.
    pub fn encode(&self, x: &Vec3, code_id: &str) -> Result<Vec3> {
        Ok(self.encode_batch(std::slice::from_ref(x), code_id)?[0])
    }

    pub fn encode_batch(&self, xs: &[Vec3], code_id: &str) -> Result<Vec<Vec3>> {
        let code = self.code(code_id)?;
        self.encode_with_code(xs, &code)
    }

    pub fn encode_with_code(&self, xs: &[Vec3], code: &Vec3) -> Result<Vec<Vec3>> {
        Ok(from_rows(&self.encode_rows(to_rows(xs).view(), code)?))
    }

    /// `g(y, c)`; `y` need not lie exactly on the sphere.
    pub fn decode(&self, y: &Vec3, code_id: &str) -> Result<Vec3> {
        Ok(self.decode_batch(std::slice::from_ref(y), code_id)?[0])
    }

    pub fn decode_batch(&self, ys: &[Vec3], code_id: &str) -> Result<Vec<Vec3>> {
        let code = self.code(code_id)?;
        self.decode_with_code(ys, &code)
    }

    pub fn decode_with_code(&self, ys: &[Vec3], code: &Vec3) -> Result<Vec<Vec3>> {
        Ok(from_rows(&self.decode_rows(to_rows(ys).view(), code)?))
    }

    /// `g(f(x, c_from), c_to)`.
    pub fn map_points(&self, xs: &[Vec3], from_id: &str, to_id: &str) -> Result<Vec<Vec3>> {
        let ys = self.encode_batch(xs, from_id)?;
        self.decode_batch(&ys, to_id)
    }

    /// `g(f(x, c), c)`.
    pub fn reconstruct(&self, xs: &[Vec3], code_id: &str) -> Result<Vec<Vec3>> {
        self.map_points(xs, code_id, code_id)
    }

    /// Decodes `y` with the blended code `(1 − t)·c_a + t·c_b`, `t ∈ [0, 1]`.
    pub fn interpolate_codes(&self, ys: &[Vec3], id_a: &str, id_b: &str, t: f64) -> Result<Vec<Vec3>> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::validation(format!("interpolation parameter {t} outside [0, 1]")));
        }
        let code = self.code(id_a)? * (1.0 - t) + self.code(id_b)? * t;
        self.decode_with_code(ys, &code)
    }

    /// Decodes the vertices of an icosphere of the given depth, keeping its connectivity.
    pub fn walk_surface(&self, code_id: &str, depth: u32) -> Result<TriMesh> {
        let sphere = icosphere(depth)?;
        let vertices = self.decode_batch(&sphere.vertices, code_id)?;
        Ok(TriMesh {
            vertices,
            faces: sphere.faces,
        })
    }

    pub fn to_bundle(&self) -> Result<Bundle> {
        let mut b = Bundle::new("embedding_pair");
        self.encoder.write_into("encoder", &mut b)?;
        self.encoder_mod.write_into("encoder_mod", &mut b)?;
        self.decoder.write_into("decoder", &mut b)?;
        self.decoder_mod.write_into("decoder_mod", &mut b)?;
        let ids: Vec<&String> = self.codes.keys().collect();
        b.set_meta("code_ids", &ids)?;
        b.push_array("codes", self.codes.values().flat_map(|c| [c.x, c.y, c.z]).collect());
        Ok(b)
    }

    pub fn from_bundle(b: &Bundle) -> Result<Self> {
        b.expect_kind("embedding_pair")?;
        let ids: Vec<String> = b.meta_value("code_ids")?;
        let flat = b.array("codes")?;
        if flat.len() != ids.len() * 3 {
            return Err(Error::Format("code table length mismatch".into()));
        }
        let codes = ids
            .into_iter()
            .zip(flat.chunks_exact(3))
            .map(|(id, c)| (id, Vec3::new(c[0], c[1], c[2])))
            .collect();
        Ok(EmbeddingPair {
            encoder: DenseNet::read_from(b, "encoder")?,
            encoder_mod: DenseNet::read_from(b, "encoder_mod")?,
            decoder: DenseNet::read_from(b, "decoder")?,
            decoder_mod: DenseNet::read_from(b, "decoder_mod")?,
            codes,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_bundle()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        EmbeddingPair::from_bundle(&Bundle::load(path)?)
    }

    /// Seeds a fresh pair and registers codes drawn from a truncated normal.
    pub fn with_random_codes(arch: &ArchConfig, seed: u64, ids: &[&str]) -> Result<Self> {
        let mut pair = EmbeddingPair::new(arch, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
        for id in ids {
            pair.add_code(*id, truncated_normal_code(&mut rng));
        }
        Ok(pair)
    }
}
