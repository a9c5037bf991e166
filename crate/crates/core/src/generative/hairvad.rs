use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::{ConvDecoder, DecoderSpec};
use super::latent::{standard_noise, VadLatent};
use crate::diffnet::{lbfgs, AdamState, Bundle, LbfgsOptions};
use crate::error::{Error, Result};
use crate::geometry::{SurfaceLocator, Vec3};
use crate::hair::{uniform_params, ScalpChart, ScalpMap, Strand};

/// A latent-to-scalp-map generator. The network predicts normalized
/// coefficient channels; roots, frames and mask come from `template`.
#[derive(Debug, Clone, PartialEq)]
pub struct HairDecoder {
    pub net: ConvDecoder,
    pub template: ScalpMap,
    pub channel_mean: Vec<f64>,
    pub channel_std: Vec<f64>,
    pub trained_steps: usize,
}

impl HairDecoder {
    pub fn new(spec: DecoderSpec, template: ScalpMap, seed: u64) -> Result<Self> {
        let size = spec.output_size();
        if spec.out_channels != template.channels() || size != template.width || size != template.height {
            return Err(Error::validation(format!(
                "decoder output {size}×{size}×{} does not match scalp map {}×{}×{}",
                spec.out_channels,
                template.width,
                template.height,
                template.channels()
            )));
        }
        let c = spec.out_channels;
        Ok(HairDecoder {
            net: ConvDecoder::new(spec, seed)?,
            template,
            channel_mean: vec![0.0; c],
            channel_std: vec![1.0; c],
            trained_steps: 0,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.net.spec().latent_dim
    }

    fn texels(&self) -> usize {
        self.template.width * self.template.height
    }

    fn denormalize(&self, out: &mut [f64]) {
        let hw = self.texels();
        for (c, chunk) in out.chunks_mut(hw).enumerate() {
            for v in chunk {
                *v = self.channel_mean[c] + self.channel_std[c] * *v;
            }
        }
    }

    /// Coefficient channels (`channels × height × width`) for latent `z`.
    pub fn decode_channels(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.net.forward(z)?;
        self.denormalize(&mut out);
        Ok(out)
    }

    pub fn decode_hair(&self, z: &[f64]) -> Result<ScalpMap> {
        if self.trained_steps == 0 {
            return Err(Error::validation("hair decoder has not been trained"));
        }
        self.template.with_coeff_channels(&self.decode_channels(z)?)
    }

    /// Decodes `z ~ N(0, I)` drawn from `seed`, optionally resizes the map
    /// to `resolution²`, and evaluates `k` points per strand.
    pub fn sample_hair(&self, seed: u64, chart: &ScalpChart, resolution: Option<usize>, k: usize) -> Result<Vec<Strand>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = standard_noise(self.latent_dim(), &mut rng);
        let map = self.decode_hair(&z)?;
        match resolution {
            Some(r) => map.resize(chart, r, r)?.strands(k),
            None => map.strands(k),
        }
    }

    pub fn to_bundle(&self) -> Result<Bundle> {
        let mut b = Bundle::new("hair_decoder");
        self.net.write_into("net", &mut b)?;
        b.set_meta("channel_mean", &self.channel_mean)?;
        b.set_meta("channel_std", &self.channel_std)?;
        b.set_meta("trained_steps", &self.trained_steps)?;
        let t = self.template.to_bundle()?;
        for (k, v) in t.meta {
            b.meta.insert(format!("template.{k}"), v);
        }
        for (k, v) in t.arrays {
            b.push_array(format!("template.{k}"), v);
        }
        Ok(b)
    }

    pub fn from_bundle(b: &Bundle) -> Result<Self> {
        b.expect_kind("hair_decoder")?;
        let mut t = Bundle::new("scalp_map");
        for (k, v) in &b.meta {
            if let Some(name) = k.strip_prefix("template.") {
                t.meta.insert(name.to_string(), v.clone());
            }
        }
        for (k, v) in &b.arrays {
            if let Some(name) = k.strip_prefix("template.") {
                t.push_array(name, v.clone());
            }
        }
        let dec = HairDecoder {
            net: ConvDecoder::read_from(b, "net")?,
            template: ScalpMap::from_bundle(&t)?,
            channel_mean: b.meta_value("channel_mean")?,
            channel_std: b.meta_value("channel_std")?,
            trained_steps: b.meta_value("trained_steps")?,
        };
        let c = dec.template.channels();
        if dec.channel_mean.len() != c || dec.channel_std.len() != c || dec.net.spec().out_channels != c {
            return Err(Error::Format("hair decoder channel count mismatch".into()));
        }
        Ok(dec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_bundle()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        HairDecoder::from_bundle(&Bundle::load(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VadTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Multiplicative learning-rate decay per epoch.
    pub decay: f64,
    pub latent_lr: f64,
    pub kl_weight: f64,
    pub init_log_std: f64,
    pub seed: u64,
}

impl Default for VadTrainConfig {
    fn default() -> Self {
        VadTrainConfig {
            epochs: 300,
            batch_size: 16,
            lr: 1e-3,
            decay: 0.99,
            latent_lr: 1e-2,
            kl_weight: 1e-4,
            init_log_std: -3.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadRecord {
    pub epoch: usize,
    /// Mean masked squared error in normalized channel units.
    pub recon: f64,
    pub kl: f64,
}

#[derive(Debug, Clone)]
pub struct VadTrainResult {
    pub decoder: HairDecoder,
    pub latents: Vec<VadLatent>,
    pub history: Vec<VadRecord>,
    pub diverged_at: Option<usize>,
}

impl VadTrainResult {
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("epoch,recon,kl\n");
        for r in &self.history {
            s.push_str(&format!("{},{:.9e},{:.9e}\n", r.epoch, r.recon, r.kl));
        }
        s
    }

    /// One row per example: `index,mean_0..,log_std_0..`.
    pub fn latents_csv(&self) -> String {
        let d = self.latents.first().map_or(0, VadLatent::dim);
        let mut s = String::from("index");
        for i in 0..d {
            s.push_str(&format!(",mean_{i}"));
        }
        for i in 0..d {
            s.push_str(&format!(",log_std_{i}"));
        }
        s.push('\n');
        for (n, l) in self.latents.iter().enumerate() {
            s.push_str(&n.to_string());
            for v in l.mean.iter().chain(&l.log_std) {
                s.push_str(&format!(",{v:.9e}"));
            }
            s.push('\n');
        }
        s
    }
}

struct Target {
    values: Vec<f64>,
    mask: Vec<bool>,
    valid: usize,
}

fn normalized_targets(dataset: &[ScalpMap], mean: &[f64], std: &[f64]) -> Vec<Target> {
    dataset
        .iter()
        .map(|m| {
            let hw = m.width * m.height;
            let mut values = m.coeff_channels();
            for (c, chunk) in values.chunks_mut(hw).enumerate() {
                for v in chunk {
                    *v = (*v - mean[c]) / std[c];
                }
            }
            let mask = m.mask();
            let valid = mask.iter().filter(|v| **v).count();
            Target { values, mask, valid }
        })
        .collect()
}

/// Masked mean squared error and its gradient with respect to `pred`.
fn masked_mse(pred: &[f64], t: &Target, scale: f64) -> (f64, Vec<f64>) {
    let hw = t.mask.len();
    let channels = pred.len() / hw;
    let denom = (t.valid * channels) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for (i, (p, y)) in pred.iter().zip(&t.values).enumerate() {
        if t.mask[i % hw] {
            let d = p - y;
            loss += d * d;
            grad[i] = scale * 2.0 * d / denom;
        }
    }
    (loss / denom, grad)
}

/// Trains a decoder and one variational latent per example by minimizing
/// masked reconstruction error plus a weighted KL term. All maps must share
/// one resolution and mask.
pub fn train_vad(dataset: &[ScalpMap], spec: DecoderSpec, cfg: &VadTrainConfig) -> Result<VadTrainResult> {
    if dataset.len() < 2 {
        return Err(Error::validation("VAD training needs at least two examples"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0) || !(cfg.latent_lr > 0.0) || !(cfg.kl_weight >= 0.0) {
        return Err(Error::validation("invalid VAD training configuration"));
    }
    let template = &dataset[0];
    template.validate()?;
    let mask = template.mask();
    if dataset.iter().any(|m| m.width != template.width || m.height != template.height || m.mask() != mask) {
        return Err(Error::validation("all training maps must share resolution and mask"));
    }
    let mut decoder = HairDecoder::new(spec, template.clone(), cfg.seed)?;
    let c = template.channels();
    let hw = template.width * template.height;
    let (mut sum, mut sq, mut count) = (vec![0.0; c], vec![0.0; c], 0usize);
    for m in dataset {
        let ch = m.coeff_channels();
        for p in (0..hw).filter(|&p| mask[p]) {
            for k in 0..c {
                let v = ch[k * hw + p];
                sum[k] += v;
                sq[k] += v * v;
            }
            count += 1;
        }
    }
    for k in 0..c {
        let mean = sum[k] / count as f64;
        let var = (sq[k] / count as f64 - mean * mean).max(0.0);
        decoder.channel_mean[k] = mean;
        decoder.channel_std[k] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    }
    let targets = normalized_targets(dataset, &decoder.channel_mean, &decoder.channel_std);

    let d = decoder.latent_dim();
    let n = dataset.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut latent_params: Vec<f64> = Vec::with_capacity(2 * d * n);
    for _ in 0..n {
        latent_params.extend(standard_noise(d, &mut rng).into_iter().map(|v| 0.01 * v));
        latent_params.extend(std::iter::repeat_n(cfg.init_log_std, d));
    }
    let mut net_opt = AdamState::new(decoder.net.param_count(), cfg.lr).with_decay(cfg.decay);
    let mut lat_opt = AdamState::new(latent_params.len(), cfg.latent_lr);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    let mut diverged_at = None;
    let mut steps = 0;

    'epochs: for epoch in 0..cfg.epochs {
        let checkpoint = (decoder.net.clone(), latent_params.clone());
        order.shuffle(&mut rng);
        let (mut recon_sum, mut kl_sum) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let b = batch.len() as f64;
            let mut g_net = vec![0.0; decoder.net.param_count()];
            let mut g_lat = vec![0.0; latent_params.len()];
            for &e in batch {
                let off = 2 * d * e;
                let lat = VadLatent {
                    mean: latent_params[off..off + d].to_vec(),
                    log_std: latent_params[off + d..off + 2 * d].to_vec(),
                };
                let eta = standard_noise(d, &mut rng);
                let z = lat.reparameterize(&eta)?;
                let (pred, tape) = match decoder.net.forward_tape(&z) {
                    Ok(v) => v,
                    Err(Error::Numeric(msg)) => {
                        warn!("VAD training diverged at epoch {epoch}: {msg}");
                        diverged_at = Some(epoch);
                        (decoder.net, latent_params) = checkpoint;
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                };
                let (recon, d_pred) = masked_mse(&pred, &targets[e], 1.0 / b);
                let kl = lat.kl_divergence();
                recon_sum += recon;
                kl_sum += kl;
                let dz = decoder.net.backward(&tape, &d_pred, Some(&mut g_net))?;
                let (kl_m, kl_s) = lat.kl_grad();
                for i in 0..d {
                    g_lat[off + i] = dz[i] + cfg.kl_weight * kl_m[i] / b;
                    g_lat[off + d + i] = dz[i] * eta[i] * lat.log_std[i].exp() + cfg.kl_weight * kl_s[i] / b;
                }
            }
            if net_opt.step(decoder.net.params_mut(), &g_net).is_err()
                || lat_opt.step(&mut latent_params, &g_lat).is_err()
            {
                warn!("VAD training diverged at epoch {epoch}: non-finite gradient");
                diverged_at = Some(epoch);
                (decoder.net, latent_params) = checkpoint;
                break 'epochs;
            }
            steps += 1;
        }
        net_opt.end_epoch();
        let rec = VadRecord {
            epoch,
            recon: recon_sum / n as f64,
            kl: kl_sum / n as f64,
        };
        if !rec.recon.is_finite() {
            diverged_at = Some(epoch);
            (decoder.net, latent_params) = checkpoint;
            break;
        }
        if epoch % 50 == 0 || epoch + 1 == cfg.epochs {
            info!("vad epoch {epoch}: recon {:.4e} kl {:.4e}", rec.recon, rec.kl);
        }
        history.push(rec);
    }
    decoder.trained_steps = steps;
    let latents = latent_params
        .chunks(2 * d)
        .map(|c| VadLatent {
            mean: c[..d].to_vec(),
            log_std: c[d..].to_vec(),
        })
        .collect();
    Ok(VadTrainResult {
        decoder,
        latents,
        history,
        diverged_at,
    })
}

/// Root-mean-square masked reconstruction error, in normalized channel
/// units, of each map decoded from its latent mean.
pub fn reconstruction_rmse(decoder: &HairDecoder, latents: &[VadLatent], dataset: &[ScalpMap]) -> Result<f64> {
    if latents.len() != dataset.len() || dataset.is_empty() {
        return Err(Error::validation("one latent per example is required"));
    }
    let targets = normalized_targets(dataset, &decoder.channel_mean, &decoder.channel_std);
    let mut acc = 0.0;
    for (l, t) in latents.iter().zip(&targets) {
        let pred = decoder.net.forward(&l.mean)?;
        acc += masked_mse(&pred, t, 1.0).0;
    }
    Ok((acc / dataset.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatentFitConfig {
    /// Weight of the `‖β‖²` prior.
    pub lambda: f64,
    /// Budget of decoder forward+backward passes.
    pub max_evals: usize,
    pub max_iters: usize,
}

impl Default for LatentFitConfig {
    fn default() -> Self {
        LatentFitConfig {
            lambda: 1e-2,
            max_evals: 2000,
            max_iters: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFit {
    pub latent: Vec<f64>,
    pub objective: f64,
    pub history: Vec<f64>,
    pub iterations: usize,
    /// Decoder forward+backward passes used.
    pub evaluations: usize,
    pub seconds: f64,
    pub guides_used: usize,
    /// RMS point distance between predicted and guide strands.
    pub rms: f64,
    /// `rms` divided by the RMS distance of guide points from their roots.
    pub relative_rms: f64,
}

pub const MAX_GUIDES: usize = 50;

struct Guide {
    texel: usize,
    origin: Vec3,
    rotation: nalgebra::Matrix3<f64>,
    /// `k × (degree+1)` cumulative decode weights.
    weights: Vec<Vec<f64>>,
    points: Vec<Vec3>,
}

/// Finds the latent whose decoded strands at the guides' texels best match
/// the guides, with an L2 prior on the latent.
pub fn fit_latent(
    decoder: &HairDecoder,
    chart: &ScalpChart,
    guides: &[Strand],
    cfg: &LatentFitConfig,
) -> Result<LatentFit> {
    if guides.is_empty() || guides.len() > MAX_GUIDES {
        return Err(Error::validation(format!("expected 1..={MAX_GUIDES} guide strands, got {}", guides.len())));
    }
    if decoder.trained_steps == 0 {
        return Err(Error::validation("hair decoder has not been trained"));
    }
    let start = Instant::now();
    let locator = SurfaceLocator::new(&chart.mesh)?;
    let map = &decoder.template;
    let basis = map.basis;
    let mut prepared = Vec::new();
    for g in guides {
        if g.frame != crate::hair::FrameTag::World {
            return Err(Error::validation("guides must be world-space strands"));
        }
        let hit = locator.closest(&g.root())?;
        let sample = crate::geometry::SurfaceSample::from_barycentric(&chart.mesh, hit.face_index, hit.barycentric);
        let texel = map.texel_index(chart.uv_of(&sample));
        let Some(t) = map.texels[texel].as_ref() else {
            continue;
        };
        let k = g.points.len();
        let step = 2.0 / (k - 1) as f64;
        let mut acc = vec![0.0; basis.len()];
        let mut weights = vec![acc.clone()];
        for tp in uniform_params(k - 1) {
            for (a, v) in acc.iter_mut().zip(basis.eval(tp)?) {
                *a += v * step;
            }
            weights.push(acc.clone());
        }
        prepared.push(Guide {
            texel,
            origin: t.root.position,
            rotation: t.frame.matrix(),
            weights,
            points: g.points.clone(),
        });
    }
    if prepared.is_empty() {
        return Err(Error::validation("no guide strand maps onto a valid scalp texel"));
    }
    let hw = map.width * map.height;
    let nb = basis.len();
    let lambda = cfg.lambda;

    let residuals = |out: &[f64], g: &Guide| -> Vec<Vec3> {
        let coeffs: Vec<Vec3> = (0..nb)
            .map(|n| {
                Vec3::from_fn(|a, _| {
                    let ch = a * nb + n;
                    decoder.channel_mean[ch] + decoder.channel_std[ch] * out[ch * hw + g.texel]
                })
            })
            .collect();
        g.weights
            .iter()
            .zip(&g.points)
            .map(|(w, p)| {
                let local: Vec3 = coeffs.iter().zip(w).map(|(c, wv)| c * *wv).sum();
                g.origin + g.rotation * local - p
            })
            .collect()
    };

    let objective = |beta: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (out, tape) = decoder.net.forward_tape(beta)?;
        let mut f = lambda * beta.iter().map(|b| b * b).sum::<f64>();
        let mut d_out = vec![0.0; out.len()];
        for g in &prepared {
            let r = residuals(&out, g);
            f += r.iter().map(|v| v.norm_squared()).sum::<f64>();
            for (w, ri) in g.weights.iter().zip(&r) {
                let local = g.rotation.transpose() * (ri * 2.0);
                for n in 0..nb {
                    for a in 0..3 {
                        let ch = a * nb + n;
                        d_out[ch * hw + g.texel] += decoder.channel_std[ch] * w[n] * local[a];
                    }
                }
            }
        }
        let mut grad = decoder.net.backward(&tape, &d_out, None)?;
        for (gv, b) in grad.iter_mut().zip(beta) {
            *gv += 2.0 * lambda * b;
        }
        Ok((f, grad))
    };

    let report = lbfgs(
        objective,
        vec![0.0; decoder.latent_dim()],
        LbfgsOptions {
            max_iters: cfg.max_iters,
            max_evals: cfg.max_evals,
            ..Default::default()
        },
    )?;
    let out = decoder.net.forward(&report.x)?;
    let (mut err, mut size, mut count) = (0.0, 0.0, 0usize);
    for g in &prepared {
        for (r, p) in residuals(&out, g).iter().zip(&g.points) {
            err += r.norm_squared();
            size += (p - g.points[0]).norm_squared();
            count += 1;
        }
    }
    let rms = (err / count as f64).sqrt();
    let fit = LatentFit {
        latent: report.x,
        objective: report.f,
        history: report.history,
        iterations: report.iterations,
        evaluations: report.evaluations,
        seconds: start.elapsed().as_secs_f64(),
        guides_used: prepared.len(),
        rms,
        relative_rms: rms / (size / count as f64).sqrt().max(1e-300),
    };
    info!(
        "latent fit: {} guides, {} passes, relative rms {:.3e}",
        fit.guides_used, fit.evaluations, fit.relative_rms
    );
    Ok(fit)
}
