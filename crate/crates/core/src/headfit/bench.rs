use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::model::{HeadParams, RiggedTemplate, RotationParam};
use crate::error::{Error, Result};
use crate::geometry::{TriMesh, Vec3};
use crate::synth::real_sh;

/// Highest spherical-harmonic band of the scan detail; bands below 6 are left
/// out so the detail is not representable by the template's shape space.
const DETAIL_L_MAX: usize = 8;
const DETAIL_L_MIN: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadScanSpec {
    pub seed: u64,
    pub template_depth: u32,
    pub shape_dims: usize,
    pub expression_dims: usize,
    pub landmarks: usize,
    /// Midpoint subdivisions applied to the posed head to form the scan tessellation.
    pub subdivisions: u32,
    /// RMS-scale of radial high-frequency detail added to the scan.
    pub detail: f64,
    /// Half-width of uniform radial noise per scan vertex.
    pub scan_noise: f64,
    /// Standard deviation of Gaussian noise on each 3D landmark coordinate.
    pub landmark_noise: f64,
}

impl Default for HeadScanSpec {
    fn default() -> Self {
        HeadScanSpec {
            seed: 1,
            template_depth: 3,
            shape_dims: 6,
            expression_dims: 4,
            landmarks: 60,
            subdivisions: 1,
            detail: 0.01,
            scan_noise: 0.0,
            landmark_noise: 0.02,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeadScan {
    pub template: RiggedTemplate,
    pub truth: HeadParams,
    /// Ground-truth posed template.
    pub posed: TriMesh,
    pub scan: TriMesh,
    pub landmarks: Vec<Vec3>,
}

/// A scan generated from the head model itself with known parameters, then
/// re-tessellated and optionally perturbed.
pub fn synthetic_head_scan(spec: &HeadScanSpec) -> Result<HeadScan> {
    if !(spec.detail >= 0.0 && spec.scan_noise >= 0.0 && spec.landmark_noise >= 0.0) {
        return Err(Error::validation("detail and noise levels must be non-negative"));
    }
    let template =
        RiggedTemplate::head_proxy(spec.template_depth, spec.shape_dims, spec.expression_dims, spec.landmarks)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rot = RotationParam::SixD;
    let mut truth = HeadParams::neutral(&template, rot);
    for c in truth.shape.iter_mut().chain(truth.expression.iter_mut()) {
        *c = rng.random_range(-1.0..1.0);
    }
    let root = RotationParam::Euler.decode(&[
        rng.random_range(-0.2..0.2),
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.2..0.2),
    ])?;
    let jaw = RotationParam::Euler.decode(&[rng.random_range(0.05..0.25), 0.0, 0.0])?;
    truth.pose[..6].copy_from_slice(&rot.encode(&root));
    truth.pose[6..12].copy_from_slice(&rot.encode(&jaw));
    truth.translation = Vec3::new(
        rng.random_range(-0.05..0.05),
        rng.random_range(-0.05..0.05),
        rng.random_range(-0.05..0.05),
    );
    let posed = template.pose_mesh(&truth)?;

    let mut scan = posed.clone();
    for _ in 0..spec.subdivisions {
        scan = scan.subdivide_midpoint();
    }
    let first = DETAIL_L_MIN * DETAIL_L_MIN;
    let n = (DETAIL_L_MAX + 1) * (DETAIL_L_MAX + 1);
    // unit-variance coefficients give an RMS radial displacement of about sqrt(bands/4π)
    let norm = (((n - first) as f64) / (4.0 * std::f64::consts::PI)).sqrt();
    let coeffs: Vec<f64> = (0..n)
        .map(|i| if i >= first { rng.random_range(-1.0..1.0) * 3f64.sqrt() / norm } else { 0.0 })
        .collect();
    let center = truth.translation;
    let verts = scan
        .vertices
        .iter()
        .map(|v| {
            let u = (v - center).normalize();
            let r: f64 = real_sh(DETAIL_L_MAX, &u).iter().zip(&coeffs).map(|(a, b)| a * b).sum();
            let noise = if spec.scan_noise > 0.0 {
                rng.random_range(-spec.scan_noise..=spec.scan_noise)
            } else {
                0.0
            };
            v + u * (spec.detail * r + noise)
        })
        .collect();
    let scan = scan.with_vertices(verts)?;

    let normal = Normal::new(0.0, spec.landmark_noise).map_err(|e| Error::validation(e.to_string()))?;
    let landmarks = template
        .landmark_positions(&posed.vertices)
        .into_iter()
        .map(|p| p + Vec3::from_fn(|_, _| normal.sample(&mut rng)))
        .collect();
    Ok(HeadScan {
        template,
        truth,
        posed,
        scan,
        landmarks,
    })
}
