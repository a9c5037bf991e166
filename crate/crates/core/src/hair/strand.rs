use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::legendre::{decode_points, encode_points, LegendreBasis, StrandCoeffs};
use crate::diffnet::Bundle;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const DEFAULT_CONTROL_POINTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameTag {
    World,
    /// Root-relative tangent/bitangent/normal coordinates.
    Tbn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Strand {
    pub points: Vec<Vec3>,
    pub frame: FrameTag,
}

impl Strand {
    pub fn new(points: Vec<Vec3>, frame: FrameTag) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::validation("a strand needs at least 2 control points"));
        }
        if !points.iter().all(|p| p.iter().all(|v| v.is_finite())) {
            return Err(Error::validation("strand has non-finite control points"));
        }
        Ok(Strand { points, frame })
    }

    pub fn root(&self) -> Vec3 {
        self.points[0]
    }

    /// Root-mean-square distance between corresponding control points.
    pub fn rms_to(&self, other: &Strand) -> Result<f64> {
        if self.points.len() != other.points.len() {
            return Err(Error::validation("strands differ in control-point count"));
        }
        let s: f64 = self.points.iter().zip(&other.points).map(|(a, b)| (a - b).norm_squared()).sum();
        Ok((s / self.points.len() as f64).sqrt())
    }
}

/// Orthonormal root frame. Columns of [`RootFrame::matrix`] are tangent,
/// bitangent and normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootFrame {
    pub origin: Vec3,
    pub tangent: Vec3,
    pub bitangent: Vec3,
    pub normal: Vec3,
}

impl RootFrame {
    pub fn identity(origin: Vec3) -> Self {
        RootFrame {
            origin,
            tangent: Vec3::x(),
            bitangent: Vec3::y(),
            normal: Vec3::z(),
        }
    }

    /// Builds a right-handed frame from a normal and an approximate tangent.
    pub fn from_normal_tangent(origin: Vec3, normal: Vec3, tangent_hint: Vec3) -> Result<Self> {
        let n = normal
            .try_normalize(1e-12)
            .ok_or_else(|| Error::DegenerateGeometry("zero normal".into()))?;
        let t = (tangent_hint - n * n.dot(&tangent_hint))
            .try_normalize(1e-12)
            .or_else(|| {
                // hint parallel to the normal: fall back to any perpendicular axis
                let axis = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
                (axis - n * n.dot(&axis)).try_normalize(1e-12)
            })
            .ok_or_else(|| Error::DegenerateGeometry("cannot build tangent".into()))?;
        Ok(RootFrame {
            origin,
            tangent: t,
            bitangent: n.cross(&t),
            normal: n,
        })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[self.tangent, self.bitangent, self.normal])
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.matrix();
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        if !(err <= 1e-8) || !((m.determinant() - 1.0).abs() <= 1e-8) {
            return Err(Error::validation(format!(
                "root frame is not right-handed orthonormal (deviation {err:e})"
            )));
        }
        if !self.origin.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("root frame origin is not finite"));
        }
        Ok(())
    }

    /// Re-orthonormalizes around the normal.
    pub fn orthonormalized(&self) -> Result<Self> {
        RootFrame::from_normal_tangent(self.origin, self.normal, self.tangent)
    }
}

/// World coordinates to root-relative TBN coordinates.
pub fn to_tbn(strand: &Strand, frame: &RootFrame) -> Result<Strand> {
    if strand.frame != FrameTag::World {
        return Err(Error::validation("strand is not in world coordinates"));
    }
    frame.validate()?;
    let rt = frame.matrix().transpose();
    Ok(Strand {
        points: strand.points.iter().map(|p| rt * (p - frame.origin)).collect(),
        frame: FrameTag::Tbn,
    })
}

pub fn from_tbn(strand: &Strand, frame: &RootFrame) -> Result<Strand> {
    if strand.frame != FrameTag::Tbn {
        return Err(Error::validation("strand is not in TBN coordinates"));
    }
    frame.validate()?;
    let r = frame.matrix();
    Ok(Strand {
        points: strand.points.iter().map(|p| r * p + frame.origin).collect(),
        frame: FrameTag::World,
    })
}

/// Encodes a TBN-local strand (root at the origin) into Legendre coefficients
/// of its relative offsets.
pub fn encode_strand(strand: &Strand, basis: &LegendreBasis) -> Result<StrandCoeffs> {
    if strand.frame != FrameTag::Tbn {
        return Err(Error::validation("encode expects a TBN-local strand"));
    }
    encode_points(&strand.points, basis)
}

pub fn decode_strand(coeffs: &StrandCoeffs, k: usize, basis: &LegendreBasis) -> Result<Strand> {
    Ok(Strand {
        points: decode_points(coeffs, k, basis)?,
        frame: FrameTag::Tbn,
    })
}

/// Writes strands as a binary bundle (`count`, `k`, flat xyz) plus a JSON
/// sidecar `<path>.json` listing each strand's frame tag.
pub fn save_strands(strands: &[Strand], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let k = strands.first().map_or(0, |s| s.points.len());
    if strands.iter().any(|s| s.points.len() != k) {
        return Err(Error::validation("all strands in a file must share the control-point count"));
    }
    let mut b = Bundle::new("strands");
    b.set_meta("count", &strands.len())?;
    b.set_meta("k", &k)?;
    b.push_array(
        "points",
        strands.iter().flat_map(|s| s.points.iter().flat_map(|p| [p.x, p.y, p.z])).collect(),
    );
    b.save(path)?;
    let tags: Vec<FrameTag> = strands.iter().map(|s| s.frame).collect();
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_string(&tags)?).map_err(|e| Error::io(&side, e))
}

pub fn load_strands(path: impl AsRef<Path>) -> Result<Vec<Strand>> {
    let path = path.as_ref();
    let b = Bundle::load(path)?;
    b.expect_kind("strands")?;
    let count: usize = b.meta_value("count")?;
    let k: usize = b.meta_value("k")?;
    let flat = b.array("points")?;
    if flat.len() != count * k * 3 {
        return Err(Error::Format("strand array length mismatch".into()));
    }
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let tags: Vec<FrameTag> = serde_json::from_str(&text)?;
    if tags.len() != count {
        return Err(Error::Format("sidecar frame tags do not match strand count".into()));
    }
    flat.chunks_exact((k * 3).max(1))
        .zip(tags)
        .map(|(c, tag)| Strand::new(c.chunks_exact(3).map(|p| Vec3::new(p[0], p[1], p[2])).collect(), tag))
        .collect()
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Tolerance below the unit sphere accepted by [`SphereCoord::encode`].
pub const INSIDE_TOLERANCE: f64 = 1e-6;

/// A point outside the unit sphere as a unit direction and a non-negative
/// radial excess, `p = (1 + s)·u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereCoord {
    pub direction: Vec3,
    pub scale: f64,
}

impl SphereCoord {
    pub fn encode(p: &Vec3) -> Result<Self> {
        let r = p.norm();
        if !(r >= 1.0 - INSIDE_TOLERANCE) {
            return Err(Error::validation(format!("point is inside the unit sphere (norm {r})")));
        }
        Ok(SphereCoord {
            direction: p / r,
            scale: (r - 1.0).max(0.0),
        })
    }

    /// Maps an unconstrained direction and raw scale (softplus) to a coordinate.
    pub fn from_unconstrained(direction: &Vec3, raw_scale: f64) -> Result<Self> {
        let u = direction
            .try_normalize(1e-300)
            .ok_or_else(|| Error::numeric("zero direction"))?;
        let s = if raw_scale > 30.0 {
            raw_scale
        } else {
            raw_scale.exp().ln_1p()
        };
        Ok(SphereCoord { direction: u, scale: s })
    }

    /// `(1 + s)·u`, nudged outward if rounding left it inside the sphere.
    pub fn decode(&self) -> Vec3 {
        let mut p = self.direction.normalize() * (1.0 + self.scale.max(0.0));
        while p.norm() < 1.0 {
            p *= 1.0 + f64::EPSILON;
        }
        p
    }
}
