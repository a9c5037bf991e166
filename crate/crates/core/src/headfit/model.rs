use std::path::Path;

use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use crate::diffnet::Bundle;
use crate::error::{Error, Result};
use crate::geometry::{icosphere, TriMesh, Vec3};
use crate::synth::{farthest_points, real_sh};

pub const TEMPLATE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    /// Parents precede their children.
    pub parent: Option<usize>,
    pub center: Vec3,
}

/// One landmark as a convex combination of vertices.
pub type LandmarkRow = Vec<(usize, f64)>;

/// Skinned template: rest mesh, joints, per-vertex skinning weights, linear
/// shape and expression bases, and a landmark regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct RiggedTemplate {
    pub rest: TriMesh,
    pub joints: Vec<Joint>,
    /// `weights[vertex][joint]`.
    pub weights: Vec<Vec<f64>>,
    pub shape_basis: Vec<Vec<Vec3>>,
    pub expression_basis: Vec<Vec<Vec3>>,
    pub landmarks: Vec<LandmarkRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationParam {
    /// `Rz(c)·Ry(b)·Rx(a)` from `(a, b, c)`.
    Euler,
    /// First two columns, Gram–Schmidt orthonormalized.
    SixD,
    /// Row-major 3×3 matrix; must already be a rotation.
    Matrix,
}

impl RotationParam {
    pub fn dim(self) -> usize {
        match self {
            RotationParam::Euler => 3,
            RotationParam::SixD => 6,
            RotationParam::Matrix => 9,
        }
    }

    pub fn identity(self) -> Vec<f64> {
        match self {
            RotationParam::Euler => vec![0.0; 3],
            RotationParam::SixD => vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            RotationParam::Matrix => vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        }
    }

    pub fn decode(self, p: &[f64]) -> Result<Matrix3<f64>> {
        Ok(self.decode_with_derivs(p)?.0)
    }

    /// Rotation and its derivative with respect to each parameter.
    pub fn decode_with_derivs(self, p: &[f64]) -> Result<(Matrix3<f64>, Vec<Matrix3<f64>>)> {
        if p.len() != self.dim() || !p.iter().all(|v| v.is_finite()) {
            return Err(Error::validation(format!(
                "{self:?} rotation needs {} finite values, got {}",
                self.dim(),
                p.len()
            )));
        }
        match self {
            RotationParam::Euler => {
                let (rx, ry, rz) = (rot_x(p[0]), rot_y(p[1]), rot_z(p[2]));
                let r = rz * ry * rx;
                let d = vec![rz * ry * d_rot_x(p[0]), rz * d_rot_y(p[1]) * rx, d_rot_z(p[2]) * ry * rx];
                Ok((r, d))
            }
            RotationParam::SixD => six_d(p),
            RotationParam::Matrix => {
                let m = Matrix3::from_row_slice(p);
                let err = (m.transpose() * m - Matrix3::identity()).abs().max();
                if err > 1e-8 || (m.determinant() - 1.0).abs() > 1e-8 {
                    return Err(Error::validation("matrix pose is not a rotation"));
                }
                let d = (0..9)
                    .map(|k| {
                        let mut e = Matrix3::zeros();
                        e[(k / 3, k % 3)] = 1.0;
                        e
                    })
                    .collect();
                Ok((m, d))
            }
        }
    }

    /// Parameters representing rotation `r`.
    pub fn encode(self, r: &Matrix3<f64>) -> Vec<f64> {
        match self {
            RotationParam::Euler => {
                let (a, b, c) = Rotation3::from_matrix_unchecked(*r).euler_angles();
                vec![a, b, c]
            }
            RotationParam::SixD => vec![r[(0, 0)], r[(1, 0)], r[(2, 0)], r[(0, 1)], r[(1, 1)], r[(2, 1)]],
            RotationParam::Matrix => r.transpose().as_slice().to_vec(),
        }
    }
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn d_rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

fn d_rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn d_rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

fn six_d(p: &[f64]) -> Result<(Matrix3<f64>, Vec<Matrix3<f64>>)> {
    let a1 = Vec3::new(p[0], p[1], p[2]);
    let a2 = Vec3::new(p[3], p[4], p[5]);
    let n1 = a1.norm();
    if n1 < 1e-12 {
        return Err(Error::validation("6D rotation has a zero first column"));
    }
    let b1 = a1 / n1;
    let u = a2 - b1 * b1.dot(&a2);
    let nu = u.norm();
    if nu < 1e-12 {
        return Err(Error::validation("6D rotation columns are parallel"));
    }
    let b2 = u / nu;
    let b3 = b1.cross(&b2);
    let r = Matrix3::from_columns(&[b1, b2, b3]);
    let p1 = (Matrix3::identity() - b1 * b1.transpose()) / n1;
    let p2 = (Matrix3::identity() - b2 * b2.transpose()) / nu;
    let d = (0..6)
        .map(|k| {
            let (da1, da2) = if k < 3 {
                (Vec3::from_fn(|i, _| if i == k { 1.0 } else { 0.0 }), Vec3::zeros())
            } else {
                (Vec3::zeros(), Vec3::from_fn(|i, _| if i == k - 3 { 1.0 } else { 0.0 }))
            };
            let db1 = p1 * da1;
            let du = da2 - b1 * (db1.dot(&a2) + b1.dot(&da2)) - db1 * b1.dot(&a2);
            let db2 = p2 * du;
            let db3 = db1.cross(&b2) + b1.cross(&db2);
            Matrix3::from_columns(&[db1, db2, db3])
        })
        .collect();
    Ok((r, d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub shape: Vec<f64>,
    pub expression: Vec<f64>,
    pub rotation: RotationParam,
    /// Concatenated per-joint rotation parameters.
    pub pose: Vec<f64>,
    pub translation: Vec3,
}

impl HeadParams {
    /// Zero latents, identity pose.
    pub fn neutral(template: &RiggedTemplate, rotation: RotationParam) -> Self {
        HeadParams {
            shape: vec![0.0; template.shape_basis.len()],
            expression: vec![0.0; template.expression_basis.len()],
            rotation,
            pose: template.joints.iter().flat_map(|_| rotation.identity()).collect(),
            translation: Vec3::zeros(),
        }
    }

    pub fn validate(&self, template: &RiggedTemplate) -> Result<()> {
        if self.shape.len() != template.shape_basis.len()
            || self.expression.len() != template.expression_basis.len()
            || self.pose.len() != template.joints.len() * self.rotation.dim()
        {
            return Err(Error::validation("head parameters do not match the template dimensions"));
        }
        if !self.shape.iter().chain(&self.expression).all(|v| v.is_finite())
            || !self.translation.iter().all(|v| v.is_finite())
        {
            return Err(Error::validation("head parameters are not finite"));
        }
        Ok(())
    }

    pub fn joint_rotation(&self, j: usize) -> Result<Matrix3<f64>> {
        let d = self.rotation.dim();
        self.rotation.decode(&self.pose[j * d..(j + 1) * d])
    }

    /// Flat vector: shape, expression, pose, translation.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.shape.clone();
        v.extend(&self.expression);
        v.extend(&self.pose);
        v.extend(self.translation.iter());
        v
    }

    pub fn from_vec(&self, x: &[f64]) -> Result<Self> {
        let (ns, ne, np) = (self.shape.len(), self.expression.len(), self.pose.len());
        if x.len() != ns + ne + np + 3 {
            return Err(Error::validation("flat parameter vector has the wrong length"));
        }
        Ok(HeadParams {
            shape: x[..ns].to_vec(),
            expression: x[ns..ns + ne].to_vec(),
            rotation: self.rotation,
            pose: x[ns + ne..ns + ne + np].to_vec(),
            translation: Vec3::new(x[ns + ne + np], x[ns + ne + np + 1], x[ns + ne + np + 2]),
        })
    }
}

/// Posed vertices plus the intermediate values needed for gradients.
#[derive(Debug, Clone)]
pub struct Posed {
    pub vertices: Vec<Vec3>,
    pub shaped: Vec<Vec3>,
    /// World transform of each joint: linear part and offset.
    pub linear: Vec<Matrix3<f64>>,
    pub offset: Vec<Vec3>,
    pub local: Vec<Matrix3<f64>>,
    pub local_derivs: Vec<Vec<Matrix3<f64>>>,
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

impl RiggedTemplate {
    pub fn validate(&self) -> Result<()> {
        self.rest.validate()?;
        let nv = self.rest.vertices.len();
        let nj = self.joints.len();
        if nj == 0 {
            return Err(Error::validation("template needs at least one joint"));
        }
        for (j, joint) in self.joints.iter().enumerate() {
            if joint.parent.is_some_and(|p| p >= j) {
                return Err(Error::validation("joint parents must precede their children"));
            }
        }
        if self.joints[0].parent.is_some() {
            return Err(Error::validation("the first joint must be the root"));
        }
        if self.weights.len() != nv {
            return Err(Error::validation("one skinning-weight row per vertex is required"));
        }
        for row in &self.weights {
            if row.len() != nj || row.iter().any(|w| !(*w >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-8 {
                return Err(Error::validation("skinning weights must be non-negative rows summing to 1"));
            }
        }
        for b in self.shape_basis.iter().chain(&self.expression_basis) {
            if b.len() != nv {
                return Err(Error::validation("basis field length differs from vertex count"));
            }
        }
        for row in &self.landmarks {
            if row.is_empty()
                || row.iter().any(|&(i, w)| i >= nv || !(w >= 0.0))
                || (row.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs() > 1e-8
            {
                return Err(Error::validation("landmark rows must be convex combinations of vertices"));
            }
        }
        Ok(())
    }

    /// Ellipsoidal icosphere head proxy with a root joint and a jaw joint,
    /// radial spherical-harmonic shape fields, localized expression bumps and
    /// landmarks at farthest-point face centroids.
    pub fn head_proxy(depth: u32, shape_dims: usize, expression_dims: usize, landmarks: usize) -> Result<Self> {
        let sphere = icosphere(depth)?;
        let scale = Vec3::new(0.85, 1.1, 0.95);
        let dirs = sphere.vertices.clone();
        let rest = sphere.with_vertices(dirs.iter().map(|v| v.component_mul(&scale)).collect())?;
        let joints = vec![
            Joint {
                name: "root".into(),
                parent: None,
                center: Vec3::zeros(),
            },
            Joint {
                name: "jaw".into(),
                parent: Some(0),
                center: Vec3::new(0.0, -0.3, 0.1),
            },
        ];
        let weights = rest
            .vertices
            .iter()
            .map(|v| {
                let w = smoothstep(-0.2, -0.7, v.y) * smoothstep(-0.3, 0.4, v.z);
                vec![1.0 - w, w]
            })
            .collect();
        let l_max = ((shape_dims + 4) as f64).sqrt().ceil() as usize;
        let shape_basis = (0..shape_dims)
            .map(|k| {
                // skip the constant and linear bands
                let idx = 4 + k;
                dirs.iter().map(|u| u * (0.08 * real_sh(l_max, u)[idx])).collect()
            })
            .collect();
        let bump_centers = [
            Vec3::new(0.0, -0.6, 0.8),
            Vec3::new(0.6, -0.2, 0.7),
            Vec3::new(-0.6, -0.2, 0.7),
            Vec3::new(0.0, 0.5, 0.85),
        ];
        let expression_basis = (0..expression_dims)
            .map(|k| {
                let c = bump_centers[k % bump_centers.len()].normalize();
                let sign = if k / bump_centers.len() % 2 == 0 { 1.0 } else { -1.0 };
                dirs.iter()
                    .map(|u| u * (sign * 0.06 * (-(u - c).norm_squared() / 0.15).exp()))
                    .collect()
            })
            .collect();
        let centroids: Vec<Vec3> = (0..rest.faces.len())
            .map(|f| {
                let [a, b, c] = rest.face_vertices(f);
                (a + b + c) / 3.0
            })
            .collect();
        let landmarks = farthest_points(&centroids, landmarks.min(centroids.len()))
            .into_iter()
            .map(|f| rest.faces[f].iter().map(|&i| (i, 1.0 / 3.0)).collect())
            .collect();
        let t = RiggedTemplate {
            rest,
            joints,
            weights,
            shape_basis,
            expression_basis,
            landmarks,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn pose(&self, params: &HeadParams) -> Result<Posed> {
        params.validate(self)?;
        let mut shaped = self.rest.vertices.clone();
        for (b, c) in self.shape_basis.iter().zip(&params.shape).chain(self.expression_basis.iter().zip(&params.expression)) {
            if *c != 0.0 {
                for (v, d) in shaped.iter_mut().zip(b) {
                    *v += d * *c;
                }
            }
        }
        let d = params.rotation.dim();
        let mut linear = Vec::with_capacity(self.joints.len());
        let mut offset: Vec<Vec3> = Vec::with_capacity(self.joints.len());
        let mut local = Vec::with_capacity(self.joints.len());
        let mut local_derivs = Vec::with_capacity(self.joints.len());
        for (j, joint) in self.joints.iter().enumerate() {
            let (r, dr) = params.rotation.decode_with_derivs(&params.pose[j * d..(j + 1) * d])?;
            let c = joint.center;
            let lo = c - r * c;
            match joint.parent {
                None => {
                    linear.push(r);
                    offset.push(lo + params.translation);
                }
                Some(p) => {
                    linear.push(linear[p] * r);
                    offset.push(linear[p] * lo + offset[p]);
                }
            }
            local.push(r);
            local_derivs.push(dr);
        }
        let vertices = shaped
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| {
                // v + Σ w_j ((L_j − I) v + o_j) keeps the identity pose bit-exact
                let mut delta = Vec3::zeros();
                for (j, wj) in w.iter().enumerate() {
                    if *wj != 0.0 {
                        delta += (linear[j] * v - v + offset[j]) * *wj;
                    }
                }
                v + delta
            })
            .collect();
        Ok(Posed {
            vertices,
            shaped,
            linear,
            offset,
            local,
            local_derivs,
        })
    }

    pub fn pose_mesh(&self, params: &HeadParams) -> Result<TriMesh> {
        self.rest.with_vertices(self.pose(params)?.vertices)
    }

    pub fn landmark_positions(&self, vertices: &[Vec3]) -> Vec<Vec3> {
        self.landmarks
            .iter()
            .map(|row| row.iter().map(|&(i, w)| vertices[i] * w).sum())
            .collect()
    }

    /// Adds `∂L/∂vertices` implied by `∂L/∂landmarks`.
    pub fn landmark_adjoint(&self, d_lmks: &[Vec3], d_vertices: &mut [Vec3]) {
        for (row, g) in self.landmarks.iter().zip(d_lmks) {
            for &(i, w) in row {
                d_vertices[i] += g * w;
            }
        }
    }

    /// Gradient with respect to [`HeadParams::to_vec`] given `∂L/∂vertices`.
    pub fn pose_adjoint(&self, params: &HeadParams, posed: &Posed, d_vertices: &[Vec3]) -> Vec<f64> {
        let nj = self.joints.len();
        let mut d_lin = vec![Matrix3::zeros(); nj];
        let mut d_off = vec![Vec3::zeros(); nj];
        let mut d_shaped = vec![Vec3::zeros(); d_vertices.len()];
        for ((g, v), (w, ds)) in d_vertices.iter().zip(&posed.shaped).zip(self.weights.iter().zip(&mut d_shaped)) {
            for (j, wj) in w.iter().enumerate() {
                if *wj != 0.0 {
                    let gw = g * *wj;
                    d_lin[j] += gw * v.transpose();
                    d_off[j] += gw;
                    *ds += posed.linear[j].transpose() * gw - gw;
                }
            }
            *ds += g;
        }
        let d = params.rotation.dim();
        let mut d_pose = vec![0.0; params.pose.len()];
        let mut d_trans = Vec3::zeros();
        for j in (0..nj).rev() {
            let c = self.joints[j].center;
            let r = posed.local[j];
            let lo = c - r * c;
            let d_r = match self.joints[j].parent {
                None => {
                    d_trans += d_off[j];
                    d_lin[j] - d_off[j] * c.transpose()
                }
                Some(p) => {
                    let mp = posed.linear[p];
                    let (dl, dof) = (d_lin[j], d_off[j]);
                    d_lin[p] += dl * r.transpose() + dof * lo.transpose();
                    d_off[p] += dof;
                    mp.transpose() * dl - mp.transpose() * dof * c.transpose()
                }
            };
            for (k, dr) in posed.local_derivs[j].iter().enumerate() {
                d_pose[j * d + k] = d_r.component_mul(dr).sum();
            }
        }
        let mut out: Vec<f64> = self
            .shape_basis
            .iter()
            .chain(&self.expression_basis)
            .map(|b| b.iter().zip(&d_shaped).map(|(f, g)| f.dot(g)).sum())
            .collect();
        out.extend(d_pose);
        out.extend(d_trans.iter());
        out
    }

    pub fn to_bundle(&self) -> Result<Bundle> {
        let mut b = Bundle::new("rigged_template");
        b.set_meta("version", &TEMPLATE_VERSION)?;
        b.set_meta("joints", &self.joints)?;
        b.set_meta("landmarks", &self.landmarks)?;
        b.set_meta("shape_dims", &self.shape_basis.len())?;
        b.set_meta("expression_dims", &self.expression_basis.len())?;
        b.set_meta("faces", &self.rest.faces)?;
        b.push_array("vertices", self.rest.vertices.iter().flat_map(|v| v.iter().copied()).collect());
        b.push_array("weights", self.weights.iter().flatten().copied().collect());
        b.push_array(
            "shape_basis",
            self.shape_basis.iter().flatten().flat_map(|v| v.iter().copied()).collect(),
        );
        b.push_array(
            "expression_basis",
            self.expression_basis.iter().flatten().flat_map(|v| v.iter().copied()).collect(),
        );
        Ok(b)
    }

    pub fn from_bundle(b: &Bundle) -> Result<Self> {
        b.expect_kind("rigged_template")?;
        let version: u32 = b.meta_value("version")?;
        if version != TEMPLATE_VERSION {
            return Err(Error::Format(format!("unsupported template version {version}")));
        }
        let joints: Vec<Joint> = b.meta_value("joints")?;
        let faces: Vec<[usize; 3]> = b.meta_value("faces")?;
        let ns: usize = b.meta_value("shape_dims")?;
        let ne: usize = b.meta_value("expression_dims")?;
        let verts = to_vec3(b.array("vertices")?)?;
        let nv = verts.len();
        let w = b.array("weights")?;
        if w.len() != nv * joints.len() {
            return Err(Error::Format("skinning weight array size mismatch".into()));
        }
        let fields = |name: &str, n: usize| -> Result<Vec<Vec<Vec3>>> {
            let all = to_vec3(b.array(name)?)?;
            if all.len() != n * nv {
                return Err(Error::Format(format!("{name} size mismatch")));
            }
            Ok(all.chunks(nv.max(1)).map(<[Vec3]>::to_vec).collect())
        };
        let t = RiggedTemplate {
            rest: TriMesh::new(verts, faces)?,
            weights: w.chunks(joints.len()).map(<[f64]>::to_vec).collect(),
            joints,
            shape_basis: fields("shape_basis", ns)?,
            expression_basis: fields("expression_basis", ne)?,
            landmarks: b.meta_value("landmarks")?,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_bundle()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        RiggedTemplate::from_bundle(&Bundle::load(path)?)
    }
}

fn to_vec3(a: &[f64]) -> Result<Vec<Vec3>> {
    if a.len() % 3 != 0 {
        return Err(Error::Format("coordinate array length is not a multiple of 3".into()));
    }
    Ok(a.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect())
}
