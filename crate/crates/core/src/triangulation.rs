//! Pinhole cameras, multi-view landmark triangulation and refinement of
//! landmarks on a learned surface.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix2x3, Matrix3, Matrix3x4, Matrix4, Vector2};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingPair;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Minimum camera-frame depth accepted by [`Camera::project`].
pub const MIN_DEPTH: f64 = 1e-9;

/// Pinhole camera. The pose maps camera coordinates to world coordinates,
/// `x_world = rotation · x_cam + translation`; the camera looks down `+Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRecord", into = "CameraRecord")]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    rotation: Matrix3<f64>,
    translation: Vec3,
}

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    /// Row-major world-from-camera rotation.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl TryFrom<CameraRecord> for Camera {
    type Error = Error;
    fn try_from(r: CameraRecord) -> Result<Camera> {
        let rot = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        Camera::new(r.fx, r.fy, r.cx, r.cy, rot, Vec3::from(r.translation))
    }
}

impl From<Camera> for CameraRecord {
    fn from(c: Camera) -> Self {
        CameraRecord {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| c.rotation[(i, j)])),
            translation: c.translation.into(),
        }
    }
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(ortho <= 1e-10) || !((rotation.determinant() - 1.0).abs() <= 1e-10) {
            return Err(Error::validation("camera rotation is not a proper orthonormal matrix"));
        }
        if ![fx, fy, cx, cy].iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("camera parameters must be finite"));
        }
        Ok(Camera {
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
        })
    }

    /// Camera at `eye` looking at `target`, image `y` axis pointing away from `up`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, f: f64, cx: f64, cy: f64) -> Result<Self> {
        let z = (target - eye).try_normalize(1e-12).ok_or_else(|| Error::validation("eye equals target"))?;
        let x = z
            .cross(&-up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::validation("up vector parallel to viewing direction"))?;
        let y = z.cross(&x);
        let mut rot = Matrix3::from_columns(&[x, y, z]);
        // remove rounding so the orthonormality check is tight
        let svd = rot.svd(true, true);
        rot = svd.u.unwrap() * svd.v_t.unwrap();
        Camera::new(f, f, cx, cy, rot, eye)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn to_camera_frame(&self, x: &Vec3) -> Vec3 {
        self.rotation.transpose() * (x - self.translation)
    }

    pub fn center(&self) -> Vec3 {
        self.translation
    }

    /// `K · [Rᵀ | −Rᵀt]`.
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let k = Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0);
        let rt = self.rotation.transpose();
        let mut ext = Matrix3x4::zeros();
        ext.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
        ext.set_column(3, &(-rt * self.translation));
        k * ext
    }

    pub fn project(&self, x: &Vec3) -> Result<Vector2<f64>> {
        Ok(self.project_with_jacobian(x)?.0)
    }

    /// Pixel coordinates and their 2×3 derivative with respect to the world point.
    pub fn project_with_jacobian(&self, x: &Vec3) -> Result<(Vector2<f64>, Matrix2x3<f64>)> {
        let p = self.to_camera_frame(x);
        if !(p.z > MIN_DEPTH) {
            return Err(Error::numeric(format!(
                "point ({}, {}, {}) is behind the camera (depth {:e})",
                x.x, x.y, x.z, p.z
            )));
        }
        let iz = 1.0 / p.z;
        let uv = Vector2::new(self.fx * p.x * iz + self.cx, self.fy * p.y * iz + self.cy);
        let d_cam = Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * p.x * iz * iz,
            0.0,
            self.fy * iz,
            -self.fy * p.y * iz * iz,
        );
        Ok((uv, d_cam * self.rotation.transpose()))
    }
}

pub fn cameras_to_json(cameras: &[Camera]) -> Result<String> {
    Ok(serde_json::to_string_pretty(cameras)?)
}

pub fn cameras_from_json(text: &str) -> Result<Vec<Camera>> {
    Ok(serde_json::from_str(text)?)
}

/// Per-view 2D observations of `count` landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct Landmarks2D {
    /// `uv[view][landmark]`, pixels.
    pub uv: Vec<Vec<Vector2<f64>>>,
    pub visible: Vec<Vec<bool>>,
}

impl Landmarks2D {
    pub fn new(views: usize, count: usize) -> Self {
        Landmarks2D {
            uv: vec![vec![Vector2::zeros(); count]; views],
            visible: vec![vec![false; count]; views],
        }
    }

    pub fn views(&self) -> usize {
        self.uv.len()
    }

    pub fn count(&self) -> usize {
        self.uv.first().map_or(0, |v| v.len())
    }

    /// Projects 3D points into every camera; points behind a camera are marked invisible.
    pub fn from_points(cameras: &[Camera], points: &[Vec3]) -> Self {
        let mut l = Landmarks2D::new(cameras.len(), points.len());
        for (v, cam) in cameras.iter().enumerate() {
            for (i, p) in points.iter().enumerate() {
                if let Ok(uv) = cam.project(p) {
                    l.uv[v][i] = uv;
                    l.visible[v][i] = true;
                }
            }
        }
        l
    }

    fn check(&self, cameras: &[Camera]) -> Result<()> {
        if self.views() != cameras.len() {
            return Err(Error::validation(format!(
                "{} landmark views for {} cameras",
                self.views(),
                cameras.len()
            )));
        }
        if self.uv.iter().any(|v| v.len() != self.count())
            || self.visible.len() != self.views()
            || self.visible.iter().any(|v| v.len() != self.count())
        {
            return Err(Error::validation("ragged landmark table"));
        }
        Ok(())
    }

    /// CSV with header `view,index,u,v,visible`, one row per observation.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("view,index,u,v,visible\n");
        for (v, row) in self.uv.iter().enumerate() {
            for (i, uv) in row.iter().enumerate() {
                let _ = writeln!(s, "{v},{i},{:?},{:?},{}", uv.x, uv.y, u8::from(self.visible[v][i]));
            }
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if n == 0 || line.is_empty() {
                continue;
            }
            let bad = |m: &str| Error::Parse {
                line: n + 1,
                message: m.to_string(),
            };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(bad("expected 5 fields"));
            }
            let view: usize = f[0].parse().map_err(|_| bad("bad view index"))?;
            let idx: usize = f[1].parse().map_err(|_| bad("bad landmark index"))?;
            let u: f64 = f[2].parse().map_err(|_| bad("bad u"))?;
            let v: f64 = f[3].parse().map_err(|_| bad("bad v"))?;
            let vis = match f[4] {
                "1" | "true" => true,
                "0" | "false" => false,
                _ => return Err(bad("bad visibility flag")),
            };
            rows.push((view, idx, Vector2::new(u, v), vis));
        }
        let views = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let count = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let mut l = Landmarks2D::new(views, count);
        for (view, idx, uv, vis) in rows {
            l.uv[view][idx] = uv;
            l.visible[view][idx] = vis;
        }
        Ok(l)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Landmarks2D::from_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangulatedPoint {
    /// `None` when fewer than two views observe the landmark.
    pub position: Option<Vec3>,
    pub views_used: usize,
    /// Root-mean-square reprojection error over the visible views, pixels.
    pub rms_px: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_iters: usize,
    pub initial_damping: f64,
    /// Stop when the step is below this length.
    pub step_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iters: 100,
            initial_damping: 1e-3,
            step_tol: 1e-14,
        }
    }
}

fn reprojection_cost(cameras: &[Camera], obs: &[(usize, Vector2<f64>)], x: &Vec3) -> Option<f64> {
    let mut c = 0.0;
    for (v, uv) in obs {
        let p = cameras[*v].project(x).ok()?;
        c += (p - uv).norm_squared();
    }
    Some(c)
}

/// Linear triangulation from the homogeneous projection equations.
fn dlt(cameras: &[Camera], obs: &[(usize, Vector2<f64>)]) -> Option<Vec3> {
    // Normal matrix AᵀA of the stacked 2n×4 system; its smallest eigenvector
    // solves the homogeneous least-squares problem.
    let mut ata = Matrix4::zeros();
    for (v, uv) in obs {
        let p = cameras[*v].projection_matrix();
        for r in [p.row(0) - uv.x * p.row(2), p.row(1) - uv.y * p.row(2)] {
            let r = r / r.norm().max(1e-300);
            ata += r.transpose() * r;
        }
    }
    let eig = ata.symmetric_eigen();
    let (imin, _) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    let h = eig.eigenvectors.column(imin);
    if h[3].abs() < 1e-300 {
        return None;
    }
    Some(Vec3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]))
}

fn levenberg_marquardt(cameras: &[Camera], obs: &[(usize, Vector2<f64>)], x0: Vec3, opts: &LmOptions) -> Vec3 {
    let mut x = x0;
    let Some(mut cost) = reprojection_cost(cameras, obs, &x) else {
        return x;
    };
    let mut lambda = opts.initial_damping;
    for _ in 0..opts.max_iters {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vec3::zeros();
        for (v, uv) in obs {
            let Ok((p, j)) = cameras[*v].project_with_jacobian(&x) else {
                return x;
            };
            let r = p - uv;
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj;
            for k in 0..3 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let cand = x + step;
            match reprojection_cost(cameras, obs, &cand) {
                Some(c) if c <= cost => {
                    let small = step.norm() <= opts.step_tol * (1.0 + x.norm());
                    x = cand;
                    cost = c;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = !small;
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !improved || cost == 0.0 {
            break;
        }
    }
    x
}

/// Triangulates every landmark: linear initialization refined by
/// Levenberg–Marquardt on the reprojection error, uniform across views.
pub fn triangulate(cameras: &[Camera], lmks: &Landmarks2D, opts: &LmOptions) -> Result<Vec<TriangulatedPoint>> {
    lmks.check(cameras)?;
    let mut out = Vec::with_capacity(lmks.count());
    for i in 0..lmks.count() {
        let obs: Vec<(usize, Vector2<f64>)> = (0..lmks.views())
            .filter(|&v| lmks.visible[v][i])
            .map(|v| (v, lmks.uv[v][i]))
            .collect();
        if obs.len() < 2 {
            out.push(TriangulatedPoint {
                position: None,
                views_used: obs.len(),
                rms_px: f64::NAN,
            });
            continue;
        }
        let x = dlt(cameras, &obs).map(|x0| levenberg_marquardt(cameras, &obs, x0, opts));
        let cost = x.and_then(|x| reprojection_cost(cameras, &obs, &x));
        out.push(match (x, cost) {
            (Some(x), Some(c)) => TriangulatedPoint {
                position: Some(x),
                views_used: obs.len(),
                rms_px: (c / obs.len() as f64).sqrt(),
            },
            _ => TriangulatedPoint {
                position: None,
                views_used: obs.len(),
                rms_px: f64::NAN,
            },
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineOptions {
    pub steps: usize,
    pub lr: f64,
    /// Huber threshold in pixels applied to each view's residual norm.
    pub huber_delta: Option<f64>,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            steps: 500,
            lr: 1e-3,
            huber_delta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult {
    /// `g(Q)` for each landmark.
    pub points: Vec<Vec3>,
    /// Sphere points, unit norm.
    pub sphere_points: Vec<Vec3>,
    pub initial_cost: Vec<f64>,
    pub final_cost: Vec<f64>,
    /// Total cost after each iteration (non-increasing).
    pub history: Vec<f64>,
}

fn robust(r2: f64, huber: Option<f64>) -> (f64, f64) {
    // returns (ρ(|r|), dρ/d(r²))
    match huber {
        Some(d) if r2 > d * d => {
            let r = r2.sqrt();
            (2.0 * d * r - d * d, d / r)
        }
        _ => (r2, 1.0),
    }
}

/// Per-landmark cost and `∂cost/∂point` for decoded points.
fn view_costs(
    cameras: &[Camera],
    lmks: &Landmarks2D,
    points: &[Vec3],
    huber: Option<f64>,
) -> Result<(Vec<f64>, Vec<Vec3>)> {
    let mut cost = vec![0.0; points.len()];
    let mut grad = vec![Vec3::zeros(); points.len()];
    for (i, x) in points.iter().enumerate() {
        for (v, cam) in cameras.iter().enumerate() {
            if !lmks.visible[v][i] {
                continue;
            }
            let (p, j) = cam.project_with_jacobian(x)?;
            let r = p - lmks.uv[v][i];
            let (rho, w) = robust(r.norm_squared(), huber);
            cost[i] += rho;
            grad[i] += j.transpose() * r * (2.0 * w);
        }
    }
    Ok((cost, grad))
}

/// Moves each landmark along the surface decoded under `code_id`: optimizes
/// a sphere point `Q` (renormalized after every step) so that the
/// projections of `g(Q)` match the 2D observations. Starts from `Q = f(P₀)`.
/// Steps that would increase a landmark's cost are rejected and that
/// landmark's step size halved.
pub fn refine_on_surface(
    pair: &EmbeddingPair,
    code_id: &str,
    cameras: &[Camera],
    lmks: &Landmarks2D,
    p0: &[Vec3],
    opts: &RefineOptions,
) -> Result<RefineResult> {
    lmks.check(cameras)?;
    if p0.len() != lmks.count() {
        return Err(Error::validation(format!(
            "{} initial points for {} landmarks",
            p0.len(),
            lmks.count()
        )));
    }
    let code = pair.code(code_id)?;
    let n = p0.len();
    let mut q = pair.encode_batch(p0, code_id)?;
    let eval = |q: &[Vec3]| -> Result<(Vec<Vec3>, Vec<f64>, Vec<Vec3>)> {
        let pass = pair.decode_forward(crate::embed::to_rows(q).view(), &code)?;
        let pts = crate::embed::from_rows(&pass.out);
        let (cost, d_pts) = view_costs(cameras, lmks, &pts, opts.huber_delta)?;
        let d_out = Array2::from_shape_fn((n, 3), |(i, k)| d_pts[i][k]);
        let d_q = pair.decode_backward(&pass, &d_out, None)?;
        Ok((pts, cost, crate::embed::from_rows(&d_q)))
    };
    let (mut pts, mut cost, mut grad) = eval(&q)?;
    let initial_cost = cost.clone();
    let mut history = vec![cost.iter().sum()];
    let mut lr = vec![opts.lr; n];
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut m = vec![Vec3::zeros(); n];
    let mut v = vec![Vec3::zeros(); n];
    for t in 1..=opts.steps {
        let mut cand = q.clone();
        let (mut m_new, mut v_new) = (m.clone(), v.clone());
        for i in 0..n {
            // tangential component only; the radial part is removed by renormalization anyway
            let g = grad[i] - q[i] * q[i].dot(&grad[i]);
            m_new[i] = m[i] * b1 + g * (1.0 - b1);
            v_new[i] = v[i] * b2 + g.component_mul(&g) * (1.0 - b2);
            let mh = m_new[i] / (1.0 - b1.powi(t as i32));
            let vh = v_new[i] / (1.0 - b2.powi(t as i32));
            let step = mh.zip_map(&vh, |a, b| a / (b.sqrt() + eps));
            cand[i] = (q[i] - step * lr[i]).normalize();
        }
        let (cpts, ccost, cgrad) = match eval(&cand) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("landmark refinement stopped at iteration {t}: {e}");
                break;
            }
        };
        for i in 0..n {
            if ccost[i] <= cost[i] && ccost[i].is_finite() {
                q[i] = cand[i];
                pts[i] = cpts[i];
                cost[i] = ccost[i];
                grad[i] = cgrad[i];
                m[i] = m_new[i];
                v[i] = v_new[i];
            } else {
                lr[i] *= 0.5;
            }
        }
        history.push(cost.iter().sum());
    }
    Ok(RefineResult {
        points: pts,
        sphere_points: q,
        initial_cost,
        final_cost: cost,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn ring(n: usize) -> Vec<Camera> {
        (0..n)
            .map(|k| {
                let a = k as f64 / n as f64 * std::f64::consts::TAU;
                let eye = Vec3::new(4.0 * a.cos(), 0.7 * ((k % 3) as f64 - 1.0), 4.0 * a.sin());
                Camera::look_at(eye, Vec3::zeros(), Vec3::y(), 800.0, 320.0, 240.0).unwrap()
            })
            .collect()
    }

    #[test]
    fn projection_examples() {
        let id = Camera::new(1.0, 1.0, 0.0, 0.0, Matrix3::identity(), Vec3::zeros()).unwrap();
        assert_eq!(id.project(&Vec3::new(0.0, 0.0, 1.0)).unwrap(), Vector2::new(0.0, 0.0));
        let c = Camera::new(100.0, 100.0, 320.0, 240.0, Matrix3::identity(), Vec3::zeros()).unwrap();
        assert_eq!(c.project(&Vec3::new(1.0, 0.0, 2.0)).unwrap(), Vector2::new(370.0, 240.0));
        assert!(c.project(&Vec3::new(1.0, 0.0, 0.0)).is_err());
        assert!(c.project(&Vec3::new(1.0, 0.0, -1.0)).is_err());
    }

    #[test]
    fn rejects_improper_rotation() {
        let mut r = Matrix3::identity();
        r[(0, 0)] = -1.0;
        assert!(Camera::new(1.0, 1.0, 0.0, 0.0, r, Vec3::zeros()).is_err());
        assert!(Camera::new(1.0, 1.0, 0.0, 0.0, Matrix3::identity() * 1.01, Vec3::zeros()).is_err());
    }

    #[test]
    fn projection_jacobian_matches_fd() {
        let cam = &ring(5)[2];
        let x = Vec3::new(0.2, -0.3, 0.5);
        let (_, j) = cam.project_with_jacobian(&x).unwrap();
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = 1e-6;
            let fd = (cam.project(&(x + e)).unwrap() - cam.project(&(x - e)).unwrap()) / 2e-6;
            assert!((fd - j.column(k)).norm() < 1e-4 * fd.norm().max(1.0));
        }
    }

    #[test]
    fn noiseless_points_are_recovered() {
        let cams = ring(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec3> = (0..50)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let l = Landmarks2D::from_points(&cams, &pts);
        let tri = triangulate(&cams, &l, &LmOptions::default()).unwrap();
        for (t, p) in tri.iter().zip(&pts) {
            assert!((t.position.unwrap() - p).norm() < 1e-6);
        }
    }

    #[test]
    fn single_view_is_unresolvable() {
        let cams = ring(3);
        let mut l = Landmarks2D::from_points(&cams, &[Vec3::new(0.1, 0.2, 0.3)]);
        l.visible[1][0] = false;
        l.visible[2][0] = false;
        let tri = triangulate(&cams, &l, &LmOptions::default()).unwrap();
        assert!(tri[0].position.is_none());
        assert_eq!(tri[0].views_used, 1);
    }

    #[test]
    fn more_views_reduce_noise() {
        let cams = ring(16);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let pts: Vec<Vec3> = (0..200)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut l = Landmarks2D::from_points(&cams, &pts);
        for row in &mut l.uv {
            for uv in row {
                uv.x += noise.sample(&mut rng);
                uv.y += noise.sample(&mut rng);
            }
        }
        let rms = |cams: &[Camera], l: &Landmarks2D| {
            let tri = triangulate(cams, l, &LmOptions::default()).unwrap();
            let s: f64 = tri.iter().zip(&pts).map(|(t, p)| (t.position.unwrap() - p).norm_squared()).sum();
            (s / pts.len() as f64).sqrt()
        };
        let two = Landmarks2D {
            uv: vec![l.uv[0].clone(), l.uv[4].clone()],
            visible: vec![l.visible[0].clone(), l.visible[4].clone()],
        };
        let e2 = rms(&[cams[0].clone(), cams[4].clone()], &two);
        let e16 = rms(&cams, &l);
        assert!(e16 < e2, "16 views {e16} vs 2 views {e2}");
    }

    #[test]
    fn csv_and_json_round_trip() {
        let cams = ring(3);
        let json = cameras_to_json(&cams).unwrap();
        let back = cameras_from_json(&json).unwrap();
        for (a, b) in cams.iter().zip(&back) {
            assert_eq!(a, b);
        }
        let mut l = Landmarks2D::from_points(&cams, &[Vec3::new(0.1, 0.2, 0.3), Vec3::new(-0.3, 0.0, 0.1)]);
        l.visible[2][1] = false;
        assert_eq!(Landmarks2D::from_csv(&l.to_csv()).unwrap(), l);
        assert!(matches!(
            Landmarks2D::from_csv("view,index,u,v,visible\n0,0,1.0\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn huber_is_continuous_at_threshold() {
        let d = 2.0;
        let (a, _) = robust(d * d - 1e-9, Some(d));
        let (b, _) = robust(d * d + 1e-9, Some(d));
        assert!((a - b).abs() < 1e-8);
    }
}
