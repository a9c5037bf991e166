use log::info;
use nalgebra::{DMatrix, DVector, Rotation3};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::latent::standard_noise;
use super::pca::pca_fit;
use crate::diffnet::{lbfgs, Activation, AdamState, DenseNet, LbfgsOptions, NetSpec};
use crate::error::{Error, Result};
use crate::geometry::{icosphere, TriMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// Rest shape plus a random combination of fixed displacement fields.
    Linear,
    /// Rest shape twisted about z and bent about y by random angles.
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub mesh_depth: u32,
    pub train: usize,
    pub test: usize,
    /// Latent factors used to generate the family.
    pub factors: usize,
    pub seed: u64,
}

impl Default for FamilySpec {
    fn default() -> Self {
        FamilySpec {
            kind: FamilyKind::Nonlinear,
            mesh_depth: 2,
            train: 200,
            test: 50,
            factors: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MeshFamily {
    pub rest: TriMesh,
    pub train: Vec<TriMesh>,
    pub test: Vec<TriMesh>,
}

fn smooth_field(rest: &TriMesh, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    // a random low-order polynomial displacement
    let c: Vec<Vec3> = (0..4)
        .map(|_| Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)))
        .collect();
    rest.vertices
        .iter()
        .map(|v| c[0] * v.x + c[1] * v.y + c[2] * v.z + c[3] * (v.x * v.y))
        .collect()
}

fn deform(rest: &TriMesh, kind: FamilyKind, fields: &[Vec<Vec3>], params: &[f64]) -> Result<TriMesh> {
    let verts = match kind {
        FamilyKind::Linear => rest
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| v + fields.iter().zip(params).map(|(f, a)| f[i] * *a).sum::<Vec3>())
            .collect(),
        FamilyKind::Nonlinear => {
            let twist = params[0] * std::f64::consts::PI;
            let bend = params.get(1).copied().unwrap_or(0.0) * std::f64::consts::FRAC_PI_2;
            let flare = params.get(2).copied().unwrap_or(0.0) * 0.5;
            rest.vertices
                .iter()
                .map(|v| {
                    let s = Vec3::new(v.x * (1.0 + flare * v.z), v.y, v.z * 1.5);
                    let t = Rotation3::from_axis_angle(&Vec3::z_axis(), twist * s.z) * s;
                    Rotation3::from_axis_angle(&Vec3::y_axis(), bend * t.z) * t
                })
                .collect()
        }
    };
    rest.with_vertices(verts)
}

/// A train/test family of meshes sharing the connectivity of an icosphere,
/// generated from `factors` uniform latent factors in `[-1, 1]`.
pub fn mesh_family(spec: &FamilySpec) -> Result<MeshFamily> {
    if spec.factors == 0 || spec.train < 2 || spec.test == 0 {
        return Err(Error::validation("family needs factors ≥ 1, train ≥ 2, test ≥ 1"));
    }
    if spec.kind == FamilyKind::Nonlinear && spec.factors > 3 {
        return Err(Error::validation("the nonlinear family has at most 3 factors"));
    }
    let rest = icosphere(spec.mesh_depth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fields: Vec<Vec<Vec3>> = (0..spec.factors).map(|_| smooth_field(&rest, &mut rng)).collect();
    let mut draw = |n: usize| -> Result<Vec<TriMesh>> {
        (0..n)
            .map(|_| {
                let p: Vec<f64> = (0..spec.factors).map(|_| rng.random_range(-1.0..1.0)).collect();
                deform(&rest, spec.kind, &fields, &p)
            })
            .collect()
    };
    let train = draw(spec.train)?;
    let test = draw(spec.test)?;
    Ok(MeshFamily { rest, train, test })
}

fn flatten(m: &TriMesh) -> Vec<f64> {
    m.vertices.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
}

/// Mean per-vertex Euclidean distance between two flattened vertex arrays.
fn mean_vertex_error(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() / 3;
    a.chunks(3)
        .zip(b.chunks(3))
        .map(|(x, y)| ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt())
        .sum::<f64>()
        / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoDecoderConfig {
    pub hidden_width: usize,
    pub depth: usize,
    pub steps: usize,
    pub lr: f64,
    pub latent_lr: f64,
    /// Weight of the `‖z‖²` prior on training latents.
    pub latent_prior: f64,
    /// L-BFGS evaluations when fitting a held-out latent.
    pub fit_evals: usize,
    pub seed: u64,
}

impl Default for AutoDecoderConfig {
    fn default() -> Self {
        AutoDecoderConfig {
            hidden_width: 128,
            depth: 2,
            steps: 3000,
            lr: 1e-3,
            latent_lr: 1e-2,
            latent_prior: 1e-4,
            fit_evals: 300,
            seed: 0,
        }
    }
}

/// MLP decoder from a latent to mean-centered vertex coordinates, trained
/// jointly with one latent per training example.
#[derive(Debug, Clone)]
pub struct AutoDecoder {
    pub net: DenseNet,
    pub mean: Vec<f64>,
    pub scale: f64,
    pub latents: Vec<Vec<f64>>,
}

impl AutoDecoder {
    pub fn dim(&self) -> usize {
        self.net.spec().input_dim
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        let y = self.net.forward(z)?;
        Ok(y.iter().zip(&self.mean).map(|(v, m)| m + self.scale * v).collect())
    }

    /// Latent minimizing squared reconstruction error of `target`, started
    /// from the best-matching training latent.
    pub fn fit(&self, target: &[f64], evals: usize) -> Result<Vec<f64>> {
        let norm: Vec<f64> = target.iter().zip(&self.mean).map(|(t, m)| (t - m) / self.scale).collect();
        let objective = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
            let zv = ArrayView2::from_shape((1, z.len()), z).map_err(|e| Error::validation(e.to_string()))?;
            let (y, tape) = self.net.forward_tape(zv)?;
            let r: Vec<f64> = y.iter().zip(&norm).map(|(a, b)| a - b).collect();
            let f = r.iter().map(|v| v * v).sum::<f64>();
            let d = Array2::from_shape_vec((1, r.len()), r.iter().map(|v| 2.0 * v).collect()).unwrap();
            let g = self.net.backward(&tape, d.view(), None)?;
            Ok((f, g.into_raw_vec_and_offset().0))
        };
        let mut best: Option<(f64, &Vec<f64>)> = None;
        for z in &self.latents {
            let y = self.net.forward(z)?;
            let e: f64 = y.iter().zip(&norm).map(|(a, b)| (a - b).powi(2)).sum();
            if best.is_none_or(|(b, _)| e < b) {
                best = Some((e, z));
            }
        }
        let z0 = best.map(|(_, z)| z.clone()).unwrap_or_else(|| vec![0.0; self.dim()]);
        let r = lbfgs(
            objective,
            z0,
            LbfgsOptions {
                max_evals: evals,
                max_iters: evals,
                ..Default::default()
            },
        )?;
        Ok(r.x)
    }
}

pub fn train_auto_decoder(data: &[Vec<f64>], dim: usize, cfg: &AutoDecoderConfig) -> Result<AutoDecoder> {
    if data.len() < 2 || dim == 0 {
        return Err(Error::validation("auto-decoder needs two samples and a positive latent size"));
    }
    let d = data[0].len();
    let n = data.len();
    let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
    let var = data
        .iter()
        .flat_map(|x| x.iter().zip(&mean).map(|(a, m)| (a - m).powi(2)))
        .sum::<f64>()
        / (n * d) as f64;
    let scale = var.sqrt().max(1e-12);
    let targets = Array2::from_shape_fn((n, d), |(i, j)| (data[i][j] - mean[j]) / scale);
    let spec = NetSpec::siren(dim, d, cfg.hidden_width, cfg.depth).with_activation(Activation::Tanh);
    let mut net = DenseNet::new(spec, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xad);
    let mut z: Vec<f64> = (0..n).flat_map(|_| standard_noise(dim, &mut rng)).map(|v| 0.1 * v).collect();
    let mut net_opt = AdamState::new(net.param_count(), cfg.lr);
    let mut z_opt = AdamState::new(z.len(), cfg.latent_lr);
    for step in 0..cfg.steps {
        let zv = ArrayView2::from_shape((n, dim), &z).unwrap();
        let (y, tape) = net.forward_tape(zv)?;
        let r = &y - &targets;
        let loss = r.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let dy = r.mapv(|v| 2.0 * v / n as f64);
        let mut g = vec![0.0; net.param_count()];
        let dz = net.backward(&tape, dy.view(), Some(&mut g))?;
        let gz: Vec<f64> = dz
            .iter()
            .zip(&z)
            .map(|(a, zz)| a + 2.0 * cfg.latent_prior * zz / n as f64)
            .collect();
        net_opt.step(net.params_mut(), &g)?;
        z_opt.step(&mut z, &gz)?;
        if step % 1000 == 0 {
            info!("auto-decoder dim {dim} step {step}: loss {loss:.4e}");
        }
    }
    Ok(AutoDecoder {
        net,
        mean,
        scale,
        latents: z.chunks(dim).map(<[f64]>::to_vec).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub dims: usize,
    /// Mean per-vertex error on held-out meshes.
    pub pca_error: f64,
    pub nonlinear_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub family: FamilySpec,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn pca_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].pca_error <= w[0].pca_error * (1.0 + 1e-12))
    }

    pub fn nonlinear_wins(&self) -> bool {
        self.rows.iter().all(|r| r.nonlinear_error < r.pca_error)
    }
}

/// Held-out reconstruction error of PCA and of an auto-decoder at each
/// latent size in `dims`.
pub fn compare_linear_nonlinear(
    family: &FamilySpec,
    dims: &[usize],
    cfg: &AutoDecoderConfig,
) -> Result<ComparisonReport> {
    let fam = mesh_family(family)?;
    let train: Vec<Vec<f64>> = fam.train.iter().map(flatten).collect();
    let test: Vec<Vec<f64>> = fam.test.iter().map(flatten).collect();
    let d = train[0].len();
    let data = DMatrix::from_fn(train.len(), d, |i, j| train[i][j]);
    let mut rows = Vec::with_capacity(dims.len());
    for &k in dims {
        let pca = pca_fit(&data, k)?;
        let mut pca_err = 0.0;
        for x in &test {
            let r = pca.project(&DVector::from_column_slice(x))?;
            pca_err += mean_vertex_error(r.as_slice(), x);
        }
        let ad = train_auto_decoder(&train, k, cfg)?;
        let mut nl_err = 0.0;
        for x in &test {
            let z = ad.fit(x, cfg.fit_evals)?;
            nl_err += mean_vertex_error(&ad.decode(&z)?, x);
        }
        let row = ComparisonRow {
            dims: k,
            pca_error: pca_err / test.len() as f64,
            nonlinear_error: nl_err / test.len() as f64,
        };
        info!(
            "dims {k}: pca {:.4e} nonlinear {:.4e}",
            row.pca_error, row.nonlinear_error
        );
        rows.push(row);
    }
    Ok(ComparisonReport {
        family: family.clone(),
        rows,
    })
}
