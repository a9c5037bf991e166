use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::{HeadParams, RiggedTemplate, RotationParam};
use crate::diffnet::{lbfgs, LbfgsOptions};
use crate::embed::EmbeddingPair;
use crate::error::{Error, Result};
use crate::geometry::{sample_surface, PointLocator, SurfaceLocator, TriMesh, Vec3};
use crate::triangulation::{Camera, Landmarks2D};

/// How the surface-attachment term pulls posed vertices onto the scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceTerm {
    /// `‖g(f(v)) − v‖²` through the scan's embedding pair.
    Implicit,
    /// `‖nearest(v) − v‖²` against the scan's vertices, as in classical
    /// point-to-point ICP.
    NearestNeighbor,
    /// `‖closest(v) − v‖²` against the scan's triangles.
    ClosestSurfacePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Fit3dConfig {
    pub lambda_lmks: f64,
    pub lambda_rec: f64,
    /// L2 prior on shape and expression latents.
    pub lambda_prior: f64,
    pub surface_term: SurfaceTerm,
    pub max_iters: usize,
    pub max_evals: usize,
    /// Scan samples used by [`scan_to_mesh_error`] after fitting.
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for Fit3dConfig {
    fn default() -> Self {
        Fit3dConfig {
            lambda_lmks: 1.0,
            lambda_rec: 0.1,
            lambda_prior: 0.0,
            surface_term: SurfaceTerm::Implicit,
            max_iters: 500,
            max_evals: 2000,
            eval_samples: 20_000,
            seed: 0,
        }
    }
}

impl Fit3dConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.lambda_lmks, self.lambda_rec, self.lambda_prior];
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::validation("fit weights must be finite and non-negative"));
        }
        if self.max_iters == 0 || self.max_evals == 0 || self.eval_samples == 0 {
            return Err(Error::validation("iteration, evaluation and sample budgets must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanToMesh {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fit3dResult {
    pub params: HeadParams,
    pub history: Vec<f64>,
    pub initial_objective: f64,
    pub objective: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub seconds: f64,
    pub scan_to_mesh: ScanToMesh,
    /// Set when the optimizer stopped on a non-finite objective.
    pub warning: Option<String>,
}

enum Attach<'a> {
    Implicit { pair: &'a EmbeddingPair, code: Vec3 },
    Nearest(&'a [Vec3], PointLocator),
    Surface(SurfaceLocator<'a>),
}

/// Objective of the 3D fit over the flat vector of [`HeadParams::to_vec`].
pub struct Fit3dProblem<'a> {
    template: &'a RiggedTemplate,
    base: HeadParams,
    landmarks: &'a [Vec3],
    attach: Attach<'a>,
    cfg: Fit3dConfig,
}

impl<'a> Fit3dProblem<'a> {
    /// `pair` and `code_id` are required for [`SurfaceTerm::Implicit`].
    pub fn new(
        template: &'a RiggedTemplate,
        scan: &'a TriMesh,
        pair: Option<(&'a EmbeddingPair, &str)>,
        landmarks: &'a [Vec3],
        init: &HeadParams,
        cfg: &Fit3dConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        init.validate(template)?;
        if init.rotation == RotationParam::Matrix {
            return Err(Error::validation("matrix rotations cannot be optimized; use euler or six_d"));
        }
        if landmarks.len() != template.landmarks.len() {
            return Err(Error::validation(format!(
                "expected {} target landmarks, got {}",
                template.landmarks.len(),
                landmarks.len()
            )));
        }
        let attach = match cfg.surface_term {
            SurfaceTerm::Implicit => {
                let (pair, id) =
                    pair.ok_or_else(|| Error::validation("the implicit surface term needs an embedding pair"))?;
                Attach::Implicit {
                    pair,
                    code: pair.code(id)?,
                }
            }
            SurfaceTerm::NearestNeighbor => Attach::Nearest(&scan.vertices, PointLocator::new(&scan.vertices)?),
            SurfaceTerm::ClosestSurfacePoint => Attach::Surface(SurfaceLocator::new(scan)?),
        };
        Ok(Fit3dProblem {
            template,
            base: init.clone(),
            landmarks,
            attach,
            cfg: cfg.clone(),
        })
    }

    pub fn params(&self, x: &[f64]) -> Result<HeadParams> {
        self.base.from_vec(x)
    }

    /// Value and gradient.
    pub fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let params = self.params(x)?;
        let posed = self.template.pose(&params)?;
        let verts = &posed.vertices;
        let mut d_v = vec![Vec3::zeros(); verts.len()];
        let mut f = 0.0;

        let lm = self.template.landmark_positions(verts);
        if !lm.is_empty() && self.cfg.lambda_lmks > 0.0 {
            let s = self.cfg.lambda_lmks / lm.len() as f64;
            let d_lm: Vec<Vec3> = lm
                .iter()
                .zip(self.landmarks)
                .map(|(p, q)| {
                    let r = p - q;
                    f += s * r.norm_squared();
                    r * (2.0 * s)
                })
                .collect();
            self.template.landmark_adjoint(&d_lm, &mut d_v);
        }

        if self.cfg.lambda_rec > 0.0 {
            let s = self.cfg.lambda_rec / verts.len() as f64;
            match &self.attach {
                Attach::Implicit { pair, code } => {
                    let x_rows = Array2::from_shape_fn((verts.len(), 3), |(i, k)| verts[i][k]);
                    let enc = pair.encode_forward(x_rows.view(), code)?;
                    let dec = pair.decode_forward(enc.y.view(), code)?;
                    let resid = &dec.out - &x_rows;
                    f += s * resid.iter().map(|r| r * r).sum::<f64>();
                    let d_out = &resid * (2.0 * s);
                    let d_y = pair.decode_backward(&dec, &d_out, None)?;
                    let d_x = pair.encode_backward(&enc, &d_y, None)?;
                    for (i, g) in d_v.iter_mut().enumerate() {
                        for k in 0..3 {
                            g[k] += d_x[[i, k]] - d_out[[i, k]];
                        }
                    }
                }
                Attach::Nearest(points, loc) => {
                    for (v, g) in verts.iter().zip(d_v.iter_mut()) {
                        let r = v - points[loc.nearest(v).0];
                        f += s * r.norm_squared();
                        *g += r * (2.0 * s);
                    }
                }
                Attach::Surface(loc) => {
                    for (v, g) in verts.iter().zip(d_v.iter_mut()) {
                        let c = loc.closest(v)?;
                        let r = v - c.point;
                        f += s * r.norm_squared();
                        *g += r * (2.0 * s);
                    }
                }
            }
        }

        let mut grad = self.template.pose_adjoint(&params, &posed, &d_v);
        add_prior(&params, self.cfg.lambda_prior, &mut f, &mut grad);
        Ok((f, grad))
    }
}

fn add_prior(params: &HeadParams, lambda: f64, f: &mut f64, grad: &mut [f64]) {
    if lambda > 0.0 {
        for (i, c) in params.shape.iter().chain(&params.expression).enumerate() {
            *f += lambda * c * c;
            grad[i] += 2.0 * lambda * c;
        }
    }
}

struct Tracked {
    best_x: Vec<f64>,
    best_f: f64,
    failure: Option<String>,
}

fn run_lbfgs<F>(mut eval: F, x0: Vec<f64>, max_iters: usize, max_evals: usize) -> Result<(crate::diffnet::LbfgsReport, Tracked)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut tracked = Tracked {
        best_x: x0.clone(),
        best_f: f64::INFINITY,
        failure: None,
    };
    let n = x0.len();
    let opts = LbfgsOptions {
        max_iters,
        max_evals,
        grad_tol: 1e-12,
        f_tol: 1e-15,
        ..Default::default()
    };
    let report = lbfgs(
        |x| match eval(x) {
            Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => {
                if f < tracked.best_f {
                    tracked.best_f = f;
                    tracked.best_x = x.to_vec();
                }
                Ok((f, g))
            }
            Ok(_) => {
                tracked.failure = Some("non-finite objective".into());
                Ok((f64::INFINITY, vec![0.0; n]))
            }
            // Invalid rotations or singular projections are treated as infeasible steps.
            Err(e) => {
                tracked.failure = Some(e.to_string());
                Ok((f64::INFINITY, vec![0.0; n]))
            }
        },
        x0,
        opts,
    )?;
    Ok((report, tracked))
}

/// Fits head parameters to a scan and its 3D landmarks.
pub fn fit_3d(
    template: &RiggedTemplate,
    scan: &TriMesh,
    pair: Option<(&EmbeddingPair, &str)>,
    landmarks: &[Vec3],
    init: &HeadParams,
    cfg: &Fit3dConfig,
) -> Result<Fit3dResult> {
    let start = Instant::now();
    let problem = Fit3dProblem::new(template, scan, pair, landmarks, init, cfg)?;
    let x0 = init.to_vec();
    let (report, tracked) = run_lbfgs(|x| problem.evaluate(x), x0, cfg.max_iters, cfg.max_evals)?;
    let mut warning = None;
    let x = if report.f.is_finite() && report.f <= tracked.best_f {
        report.x
    } else {
        let msg = format!(
            "optimizer ended on an infeasible point ({}); returning best-so-far",
            tracked.failure.as_deref().unwrap_or("unknown")
        );
        log::warn!("{msg}");
        warning = Some(msg);
        tracked.best_x
    };
    let params = problem.params(&x)?;
    let objective = problem.evaluate(&x)?.0;
    let mesh = template.pose_mesh(&params)?;
    let scan_to_mesh = scan_to_mesh_error(scan, &mesh, cfg.eval_samples, cfg.seed)?;
    Ok(Fit3dResult {
        params,
        initial_objective: report.history[0],
        history: report.history,
        objective,
        iterations: report.iterations,
        evaluations: report.evaluations,
        seconds: start.elapsed().as_secs_f64(),
        scan_to_mesh,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Fit2dConfig {
    /// L2 prior on shape and expression latents.
    pub lambda: f64,
    pub max_iters: usize,
    pub max_evals: usize,
}

impl Default for Fit2dConfig {
    fn default() -> Self {
        Fit2dConfig {
            lambda: 0.0,
            max_iters: 1000,
            max_evals: 4000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fit2dResult {
    pub params: HeadParams,
    /// Root mean squared reprojection residual in pixels over visible observations.
    pub reprojection_rms: f64,
    pub observations: usize,
    pub views_used: usize,
    /// Fewer than two views constrain the fit, so depth is not observable.
    pub depth_ambiguous: bool,
    pub history: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub warning: Option<String>,
}

fn reprojection(
    template: &RiggedTemplate,
    cameras: &[Camera],
    lmks: &Landmarks2D,
    params: &HeadParams,
    lambda: f64,
) -> Result<(f64, Vec<f64>, f64)> {
    let posed = template.pose(params)?;
    let lm = template.landmark_positions(&posed.vertices);
    let mut d_lm = vec![Vec3::zeros(); lm.len()];
    let mut sq = 0.0;
    let mut count = 0usize;
    for (view, cam) in cameras.iter().enumerate() {
        for (i, p) in lm.iter().enumerate() {
            if lmks.visible[view][i] {
                count += 1;
                let (uv, jac) = cam.project_with_jacobian(p)?;
                let r = uv - lmks.uv[view][i];
                sq += r.norm_squared();
                d_lm[i] += jac.transpose() * r;
            }
        }
    }
    let scale = 1.0 / count as f64;
    let mut f = sq * scale;
    for g in &mut d_lm {
        *g *= 2.0 * scale;
    }
    let mut d_v = vec![Vec3::zeros(); posed.vertices.len()];
    template.landmark_adjoint(&d_lm, &mut d_v);
    let mut grad = template.pose_adjoint(params, &posed, &d_v);
    add_prior(params, lambda, &mut f, &mut grad);
    Ok((f, grad, (sq * scale).sqrt()))
}

/// Fits head parameters to 2D landmark observations from calibrated cameras.
pub fn fit_2d(
    template: &RiggedTemplate,
    cameras: &[Camera],
    lmks: &Landmarks2D,
    init: &HeadParams,
    cfg: &Fit2dConfig,
) -> Result<Fit2dResult> {
    init.validate(template)?;
    if init.rotation == RotationParam::Matrix {
        return Err(Error::validation("matrix rotations cannot be optimized; use euler or six_d"));
    }
    if !(cfg.lambda >= 0.0) || cfg.max_evals == 0 || cfg.max_iters == 0 {
        return Err(Error::validation("prior weight must be non-negative and budgets positive"));
    }
    if lmks.views() != cameras.len() || lmks.count() != template.landmarks.len() {
        return Err(Error::validation(format!(
            "observations cover {} views × {} landmarks; expected {} × {}",
            lmks.views(),
            lmks.count(),
            cameras.len(),
            template.landmarks.len()
        )));
    }
    let observations: usize = lmks.visible.iter().map(|v| v.iter().filter(|b| **b).count()).sum();
    if observations == 0 {
        return Err(Error::validation("no landmark is visible in any view"));
    }
    let views_used = lmks.visible.iter().filter(|v| v.iter().any(|b| *b)).count();
    let depth_ambiguous = views_used < 2;
    if depth_ambiguous {
        log::warn!("only {views_used} view observes landmarks; depth is ambiguous");
    }
    let (report, tracked) = run_lbfgs(
        |x| {
            let p = init.from_vec(x)?;
            let (f, g, _) = reprojection(template, cameras, lmks, &p, cfg.lambda)?;
            Ok((f, g))
        },
        init.to_vec(),
        cfg.max_iters,
        cfg.max_evals,
    )?;
    let mut warning = None;
    let x = if report.f.is_finite() && report.f <= tracked.best_f {
        report.x
    } else {
        let msg = format!(
            "optimizer ended on an infeasible point ({}); returning best-so-far",
            tracked.failure.as_deref().unwrap_or("unknown")
        );
        log::warn!("{msg}");
        warning = Some(msg);
        tracked.best_x
    };
    let params = init.from_vec(&x)?;
    let (_, _, rms) = reprojection(template, cameras, lmks, &params, 0.0)?;
    if depth_ambiguous && warning.is_none() {
        warning = Some("single view: depth is not observable".into());
    }
    Ok(Fit2dResult {
        params,
        reprojection_rms: rms,
        observations,
        views_used,
        depth_ambiguous,
        history: report.history,
        iterations: report.iterations,
        evaluations: report.evaluations,
        warning,
    })
}

/// Distance from area-weighted samples on `scan` to the surface of `mesh`.
/// Directional: scan to mesh, not symmetric.
pub fn scan_to_mesh_error(scan: &TriMesh, mesh: &TriMesh, samples: usize, seed: u64) -> Result<ScanToMesh> {
    if samples == 0 {
        return Err(Error::validation("at least one sample is required"));
    }
    let pts = sample_surface(scan, samples, seed)?;
    let loc = SurfaceLocator::new(mesh)?;
    let d = pts
        .iter()
        .map(|s| loc.closest(&s.position).map(|c| c.distance))
        .collect::<Result<Vec<f64>>>()?;
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Ok(ScanToMesh { mean, std: var.sqrt() })
}
