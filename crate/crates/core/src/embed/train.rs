use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{loss_lmks, loss_rec, loss_reg};
use super::pair::{ArchConfig, EmbeddingPair, PairGrad};
use crate::diffnet::AdamState;
use crate::error::{Error, Result};
use crate::geometry::{sample_unit_sphere, AreaSampler, TriMesh, Vec3};

pub const TEMPLATE_CODE: &str = "template";
pub const SCAN_CODE: &str = "scan";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub arch: ArchConfig,
    pub steps: usize,
    /// Surface samples per mesh per step.
    pub n_surface: usize,
    /// Sphere points per step for the Hessian penalty.
    pub n_sphere: usize,
    pub w_lmks: f64,
    /// Regularizer weight at the first step.
    pub w_reg_start: f64,
    /// Regularizer weight at the last step; intermediate steps interpolate in log space.
    pub w_reg_end: f64,
    pub lr: f64,
    /// Finite-difference step of the Hessian stencil, in sphere units.
    pub hessian_step: f64,
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: ArchConfig::default(),
            steps: 10_000,
            n_surface: 512,
            n_sphere: 256,
            w_lmks: 10.0,
            w_reg_start: 1e-1,
            w_reg_end: 1e-7,
            lr: 1e-4,
            hessian_step: 1e-3,
            checkpoint_every: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.n_surface == 0 || self.n_sphere == 0 || self.checkpoint_every == 0 {
            return Err(Error::validation("step and sample counts must be positive"));
        }
        if !(self.w_reg_start > 0.0 && self.w_reg_end > 0.0 && self.w_reg_end <= self.w_reg_start) {
            return Err(Error::validation("regularizer schedule must be positive and non-increasing"));
        }
        if !(self.lr > 0.0) || !(self.w_lmks >= 0.0) {
            return Err(Error::validation("learning rate must be positive and w_lmks non-negative"));
        }
        Ok(())
    }

    /// Regularizer weight at `step`, geometric from `w_reg_start` to `w_reg_end`.
    pub fn w_reg(&self, step: usize) -> f64 {
        if self.steps <= 1 {
            return self.w_reg_start;
        }
        let t = step as f64 / (self.steps - 1) as f64;
        let (a, b) = (self.w_reg_start.log10(), self.w_reg_end.log10());
        10f64.powf(a + (b - a) * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub l_rec: f64,
    pub l_lmks: f64,
    pub l_reg: f64,
    pub w_reg: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub pair: EmbeddingPair,
    pub history: Vec<TrainRecord>,
    /// Step at which a non-finite loss or gradient stopped training. The
    /// returned pair is then the last checkpoint taken before that step.
    pub diverged_at: Option<usize>,
}

impl TrainResult {
    /// Training curve as CSV: `step,l_rec,l_lmks,l_reg,w_reg`.
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("step,l_rec,l_lmks,l_reg,w_reg\n");
        for r in &self.history {
            let _ = writeln!(s, "{},{:.9e},{:.9e},{:.9e},{:.9e}", r.step, r.l_rec, r.l_lmks, r.l_reg, r.w_reg);
        }
        s
    }

    pub fn write_curve(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.curve_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Surfaces and landmark sets entering one training run.
struct Surface<'a> {
    id: &'static str,
    mesh: &'a TriMesh,
    sampler: AreaSampler,
}

struct Optimizers {
    enc: AdamState,
    enc_mod: AdamState,
    dec: AdamState,
    dec_mod: AdamState,
}

impl Optimizers {
    fn new(pair: &EmbeddingPair, lr: f64) -> Self {
        Optimizers {
            enc: AdamState::new(pair.encoder.param_count(), lr),
            enc_mod: AdamState::new(pair.encoder_mod.param_count(), lr),
            dec: AdamState::new(pair.decoder.param_count(), lr),
            dec_mod: AdamState::new(pair.decoder_mod.param_count(), lr),
        }
    }

    fn step(&mut self, pair: &mut EmbeddingPair, g: &PairGrad) -> Result<()> {
        self.enc.step(pair.encoder.params_mut(), &g.encoder)?;
        self.enc_mod.step(pair.encoder_mod.params_mut(), &g.encoder_mod)?;
        self.dec.step(pair.decoder.params_mut(), &g.decoder)?;
        self.dec_mod.step(pair.decoder_mod.params_mut(), &g.decoder_mod)?;
        Ok(())
    }
}

fn run(
    mut pair: EmbeddingPair,
    surfaces: Vec<Surface<'_>>,
    landmarks: Option<(&[Vec3], &[Vec3])>,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    let mut opt = Optimizers::new(&pair, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9).wrapping_add(17));
    let mut history = Vec::with_capacity(cfg.steps);
    let mut checkpoint = pair.clone();

    for step in 0..cfg.steps {
        if step % cfg.checkpoint_every == 0 {
            checkpoint = pair.clone();
        }
        let w_reg = cfg.w_reg(step);
        let mut grad = PairGrad::zeros(&pair);
        let outcome = (|| -> Result<(f64, f64, f64)> {
            let mut l_rec = 0.0;
            for s in &surfaces {
                let xs: Vec<Vec3> = s
                    .sampler
                    .sample_n(s.mesh, cfg.n_surface, &mut rng)
                    .into_iter()
                    .map(|p| p.position)
                    .collect();
                l_rec += loss_rec(&pair, &xs, s.id, 1.0, Some(&mut grad))?;
            }
            let l_lmks = match landmarks {
                Some((pt, ps)) => loss_lmks(&pair, pt, TEMPLATE_CODE, ps, SCAN_CODE, cfg.w_lmks, Some(&mut grad))?,
                None => 0.0,
            };
            let ys: Vec<Vec3> = (0..cfg.n_sphere).map(|_| sample_unit_sphere(&mut rng)).collect();
            let mut l_reg = 0.0;
            for s in &surfaces {
                l_reg += loss_reg(&pair, &ys, s.id, cfg.hessian_step, w_reg, Some(&mut grad))?;
            }
            Ok((l_rec, l_lmks, l_reg))
        })();

        let diverged = match &outcome {
            Ok((a, b, c)) => !(a.is_finite() && b.is_finite() && c.is_finite()) || !grad.all_finite(),
            Err(Error::Numeric(_)) => true,
            Err(_) => false,
        };
        if diverged {
            log::warn!("training diverged at step {step}; restoring checkpoint");
            return Ok(TrainResult {
                pair: checkpoint,
                history,
                diverged_at: Some(step),
            });
        }
        let (l_rec, l_lmks, l_reg) = outcome?;
        opt.step(&mut pair, &grad)?;
        history.push(TrainRecord {
            step,
            l_rec,
            l_lmks,
            l_reg,
            w_reg,
        });
        if step % 500 == 0 {
            log::debug!("step {step}: rec {l_rec:.4e} lmks {l_lmks:.4e} reg {l_reg:.4e} w_reg {w_reg:.1e}");
        }
    }
    Ok(TrainResult {
        pair,
        history,
        diverged_at: None,
    })
}

/// Jointly embeds a template and a scan with landmark alignment in sphere
/// space. The pair gets codes [`TEMPLATE_CODE`] and [`SCAN_CODE`].
pub fn train_joint(
    template: &TriMesh,
    scan: &TriMesh,
    p_t: &[Vec3],
    p_s: &[Vec3],
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    if p_t.len() != p_s.len() {
        return Err(Error::validation(format!(
            "landmark lists differ in length: {} vs {}",
            p_t.len(),
            p_s.len()
        )));
    }
    let pair = EmbeddingPair::with_random_codes(&cfg.arch, cfg.seed, &[TEMPLATE_CODE, SCAN_CODE])?;
    let surfaces = vec![
        Surface {
            id: TEMPLATE_CODE,
            mesh: template,
            sampler: AreaSampler::new(template)?,
        },
        Surface {
            id: SCAN_CODE,
            mesh: scan,
            sampler: AreaSampler::new(scan)?,
        },
    ];
    run(pair, surfaces, Some((p_t, p_s)), cfg)
}

/// Embeds a single surface under code [`SCAN_CODE`] (no landmark term).
pub fn train_single(scan: &TriMesh, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let pair = EmbeddingPair::with_random_codes(&cfg.arch, cfg.seed, &[SCAN_CODE])?;
    let surfaces = vec![Surface {
        id: SCAN_CODE,
        mesh: scan,
        sampler: AreaSampler::new(scan)?,
    }];
    run(pair, surfaces, None, cfg)
}
