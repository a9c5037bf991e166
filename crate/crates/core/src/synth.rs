//! Synthetic benchmark: a star-shaped bumpy sphere `r(u) = 1 + Σ a_lm Y_lm(u)`
//! on icosphere connectivity, paired with the plain icosphere as template.
//! Correspondence is by direction, so landmarks and registration have an
//! exact oracle.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{icosphere, TriMesh, Vec3};
use crate::triangulation::{Camera, Landmarks2D};

/// Real spherical harmonics `Y_lm` for all `l ≤ l_max` at a unit direction,
/// orthonormal on the sphere. Index of `(l, m)` is `l² + l + m`.
pub fn real_sh(l_max: usize, u: &Vec3) -> Vec<f64> {
    let ct = u.z.clamp(-1.0, 1.0);
    let st = (1.0 - ct * ct).max(0.0).sqrt();
    let phi = u.y.atan2(u.x);
    // associated Legendre P_l^m(cos θ) without the Condon–Shortley phase
    let n = l_max + 1;
    let mut p = vec![vec![0.0; n]; n];
    p[0][0] = 1.0;
    for m in 1..n {
        p[m][m] = p[m - 1][m - 1] * (2 * m - 1) as f64 * st;
    }
    for m in 0..n {
        if m + 1 < n {
            p[m + 1][m] = (2 * m + 1) as f64 * ct * p[m][m];
        }
        for l in m + 2..n {
            p[l][m] = ((2 * l - 1) as f64 * ct * p[l - 1][m] - (l + m - 1) as f64 * p[l - 2][m]) / (l - m) as f64;
        }
    }
    let mut out = vec![0.0; n * n];
    for l in 0..n {
        for m in 0..=l {
            // K = sqrt((2l+1)/(4π) · (l−m)!/(l+m)!)
            let mut ratio = 1.0;
            for k in (l - m + 1)..=(l + m) {
                ratio /= k as f64;
            }
            let k = ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt();
            let base = l * l + l;
            if m == 0 {
                out[base] = k * p[l][0];
            } else {
                let s = std::f64::consts::SQRT_2 * k * p[l][m];
                out[base + m] = s * (m as f64 * phi).cos();
                out[base - m] = s * (m as f64 * phi).sin();
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub l: usize,
    /// RMS radial contribution of this band over the sphere.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSpec {
    pub seed: u64,
    pub bands: Vec<Band>,
    pub mesh_depth: u32,
    pub landmarks: usize,
    pub cameras: usize,
    /// Standard deviation of pixel noise added to the 2D landmarks.
    pub pixel_noise: f64,
    pub camera_distance: f64,
    pub focal: f64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            seed: 0,
            bands: vec![
                Band { l: 2, amplitude: 0.06 },
                Band { l: 3, amplitude: 0.05 },
                Band { l: 4, amplitude: 0.04 },
                Band { l: 5, amplitude: 0.03 },
            ],
            mesh_depth: 4,
            landmarks: 478,
            cameras: 16,
            pixel_noise: 0.0,
            camera_distance: 4.0,
            focal: 800.0,
        }
    }
}

/// Radial function `r(u) = 1 + Σ a_lm Y_lm(u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpField {
    pub l_max: usize,
    /// Coefficients indexed as in [`real_sh`].
    pub coeffs: Vec<f64>,
}

impl BumpField {
    pub fn from_spec(spec: &BenchmarkSpec) -> Result<Self> {
        let l_max = spec.bands.iter().map(|b| b.l).max().unwrap_or(0);
        let mut coeffs = vec![0.0; (l_max + 1) * (l_max + 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for b in &spec.bands {
            if !(b.amplitude >= 0.0 && b.amplitude.is_finite()) {
                return Err(Error::validation(format!("band {} has invalid amplitude", b.l)));
            }
            // mean square over the sphere is Σ a_lm² / 4π, so this variance
            // gives the band an expected RMS of A
            let sd = b.amplitude * (4.0 * PI / (2 * b.l + 1) as f64).sqrt();
            let normal = Normal::new(0.0, sd).map_err(|e| Error::validation(e.to_string()))?;
            for m in 0..(2 * b.l + 1) {
                coeffs[b.l * b.l + m] += normal.sample(&mut rng);
            }
        }
        Ok(BumpField { l_max, coeffs })
    }

    pub fn radius(&self, u: &Vec3) -> f64 {
        let y = real_sh(self.l_max, &u.normalize());
        1.0 + y.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `r(u)·u` for a unit direction `u`.
    pub fn surface_point(&self, u: &Vec3) -> Vec3 {
        u * self.radius(u)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScan {
    pub spec: BenchmarkSpec,
    pub field: BumpField,
    pub template: TriMesh,
    pub scan: TriMesh,
    /// Vertex indices carrying the landmarks (same index in template and scan).
    pub landmark_vertices: Vec<usize>,
    pub landmarks_template: Vec<Vec3>,
    pub landmarks_scan: Vec<Vec3>,
    pub cameras: Vec<Camera>,
    /// Projections of the scan landmarks, with `pixel_noise` applied.
    pub lmks2d: Landmarks2D,
}

impl SyntheticScan {
    /// Exact correspondent on the scan of each template vertex.
    pub fn oracle(&self, template_points: &[Vec3]) -> Vec<Vec3> {
        template_points.iter().map(|p| self.field.surface_point(p)).collect()
    }
}

/// Greedy farthest-point selection of `k` vertices starting at vertex 0.
pub(crate) fn farthest_points(points: &[Vec3], k: usize) -> Vec<usize> {
    let mut chosen = vec![0usize];
    let mut d: Vec<f64> = points.iter().map(|p| (p - points[0]).norm_squared()).collect();
    while chosen.len() < k {
        let (i, _) = d
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .unwrap();
        chosen.push(i);
        for (dj, p) in d.iter_mut().zip(points) {
            *dj = dj.min((p - points[i]).norm_squared());
        }
    }
    chosen
}

/// Cameras on a sphere around the origin (Fibonacci directions), all looking at it.
pub fn orbit_cameras(n: usize, distance: f64, focal: f64) -> Result<Vec<Camera>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            // keep away from the poles so the up vector is never parallel
            let z = 0.8 * (1.0 - 2.0 * (i as f64 + 0.5) / n as f64);
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            let eye = Vec3::new(r * a.cos(), r * a.sin(), z) * distance;
            Camera::look_at(eye, Vec3::zeros(), Vec3::z(), focal, 320.0, 240.0)
        })
        .collect()
}

pub fn synth_scan(spec: &BenchmarkSpec) -> Result<SyntheticScan> {
    let field = BumpField::from_spec(spec)?;
    let template = icosphere(spec.mesh_depth)?;
    if spec.landmarks == 0 || spec.landmarks > template.vertices.len() {
        return Err(Error::validation(format!(
            "landmark count {} not in 1..={}",
            spec.landmarks,
            template.vertices.len()
        )));
    }
    // star-shapedness is checked on a grid at least as fine as the mesh
    let check = icosphere(spec.mesh_depth.max(5))?;
    let min_r = check.vertices.iter().map(|u| field.radius(u)).fold(f64::INFINITY, f64::min);
    if !(min_r > 0.0) {
        return Err(Error::validation(format!(
            "bump spectrum gives a non-positive radius ({min_r:.4}); lower the amplitudes"
        )));
    }
    let scan = template.with_vertices(template.vertices.iter().map(|u| field.surface_point(u)).collect())?;
    let landmark_vertices = farthest_points(&template.vertices, spec.landmarks);
    let landmarks_template: Vec<Vec3> = landmark_vertices.iter().map(|&i| template.vertices[i]).collect();
    let landmarks_scan: Vec<Vec3> = landmark_vertices.iter().map(|&i| scan.vertices[i]).collect();
    let cameras = orbit_cameras(spec.cameras, spec.camera_distance, spec.focal)?;
    let mut lmks2d = Landmarks2D::from_points(&cameras, &landmarks_scan);
    // a landmark is visible only from cameras on its side of the head
    for (v, cam) in cameras.iter().enumerate() {
        for (i, p) in landmarks_scan.iter().enumerate() {
            let u = landmarks_template[i];
            if u.dot(&(cam.center() - p)) <= 0.0 {
                lmks2d.visible[v][i] = false;
            }
        }
    }
    if spec.pixel_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xa5a5_5a5a);
        let noise = Normal::new(0.0, spec.pixel_noise).map_err(|e| Error::validation(e.to_string()))?;
        for row in &mut lmks2d.uv {
            for uv in row {
                uv.x += noise.sample(&mut rng);
                uv.y += noise.sample(&mut rng);
            }
        }
    }
    Ok(SyntheticScan {
        spec: spec.clone(),
        field,
        template,
        scan,
        landmark_vertices,
        landmarks_template,
        landmarks_scan,
        cameras,
        lmks2d,
    })
}
