//! Template-to-scan registration by code swapping, re-tessellated
//! registration without retraining, and error metrics.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{EmbeddingPair, SCAN_CODE, TEMPLATE_CODE};
use crate::error::{Error, Result};
use crate::geometry::{save_ply_colored, SurfaceLocator, TriMesh, Vec3};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub template: String,
    pub scan: String,
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    /// Template connectivity with mapped vertices.
    pub registered: TriMesh,
    /// Distance from each registered vertex to the scan surface.
    pub per_vertex_error: Vec<f64>,
    pub provenance: Provenance,
}

/// Maps template vertices with `g(f(v, c_from), c_to)` and measures the
/// point-to-surface distance of each result to the scan.
pub fn register_with_codes(
    pair: &EmbeddingPair,
    template: &TriMesh,
    scan: &TriMesh,
    from_id: &str,
    to_id: &str,
) -> Result<RegistrationResult> {
    let vertices = pair.map_points(&template.vertices, from_id, to_id)?;
    let registered = TriMesh {
        vertices,
        faces: template.faces.clone(),
    };
    let locator = SurfaceLocator::new(scan)?;
    let per_vertex_error = registered
        .vertices
        .iter()
        .map(|v| locator.closest(v).map(|c| c.distance))
        .collect::<Result<Vec<f64>>>()?;
    Ok(RegistrationResult {
        registered,
        per_vertex_error,
        provenance: Provenance {
            template: from_id.to_string(),
            scan: to_id.to_string(),
            checkpoint: None,
        },
    })
}

/// Registration with the codes assigned by joint training.
pub fn register(pair: &EmbeddingPair, template: &TriMesh, scan: &TriMesh) -> Result<RegistrationResult> {
    register_with_codes(pair, template, scan, TEMPLATE_CODE, SCAN_CODE)
}

/// Midpoint-subdivides `template` `levels` times and snaps every new vertex
/// to its closest point on the original template surface. Original vertices
/// keep their indices and exact positions.
pub fn retessellate(template: &TriMesh, levels: u32) -> Result<TriMesh> {
    let locator = SurfaceLocator::new(template)?;
    let n0 = template.vertices.len();
    let mut hi = template.clone();
    for _ in 0..levels {
        hi = hi.subdivide_midpoint();
    }
    let mut vertices = hi.vertices;
    for v in vertices.iter_mut().skip(n0) {
        *v = locator.closest(v)?.point;
    }
    TriMesh::new(vertices, hi.faces)
}

/// Registers a re-tessellated template with an already trained pair. The
/// map acts on points, so vertices shared with the original template land
/// exactly where [`register`] puts them.
pub fn register_retessellated(
    pair: &EmbeddingPair,
    template_hi: &TriMesh,
    scan: &TriMesh,
) -> Result<RegistrationResult> {
    register(pair, template_hi, scan)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegistrationMetrics {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    /// Mean divided by the scan's bounding-box diagonal.
    pub mean_rel_bbox: f64,
    pub vertices: usize,
}

pub fn error_stats(errors: &[f64]) -> (f64, f64, f64) {
    if errors.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    let max = errors.iter().copied().fold(0.0, f64::max);
    (mean, var.sqrt(), max)
}

/// Maps an error in `[0, max]` to a blue→red ramp. Red increases and blue
/// decreases monotonically with the error.
pub fn error_color(e: f64, max: f64) -> [u8; 3] {
    let t = if max > 0.0 { (e / max).clamp(0.0, 1.0) } else { 0.0 };
    let r = (255.0 * t).round() as u8;
    let b = 255 - r;
    [r, 0, b]
}

/// Inverse of [`error_color`] up to 8-bit quantization.
pub fn color_to_error(c: [u8; 3], max: f64) -> f64 {
    c[0] as f64 / 255.0 * max
}

pub fn eval_registration(
    result: &RegistrationResult,
    scan: &TriMesh,
    error_map: Option<&Path>,
) -> Result<RegistrationMetrics> {
    if result.per_vertex_error.len() != result.registered.vertices.len() {
        return Err(Error::validation("error column length differs from vertex count"));
    }
    let (mean, std, max) = error_stats(&result.per_vertex_error);
    if let Some(path) = error_map {
        let colors: Vec<[u8; 3]> = result.per_vertex_error.iter().map(|&e| error_color(e, max)).collect();
        save_ply_colored(&result.registered, &colors, path)?;
    }
    Ok(RegistrationMetrics {
        mean,
        std,
        max,
        mean_rel_bbox: mean / scan.bbox_diagonal(),
        vertices: result.per_vertex_error.len(),
    })
}

/// Distance of each registered vertex to a known correspondent.
pub fn oracle_errors(result: &RegistrationResult, truth: &[Vec3]) -> Result<Vec<f64>> {
    if truth.len() != result.registered.vertices.len() {
        return Err(Error::validation("oracle length differs from vertex count"));
    }
    Ok(result.registered.vertices.iter().zip(truth).map(|(a, b)| (a - b).norm()).collect())
}

/// Per-vertex errors as CSV (`vertex,error`).
pub fn errors_csv(errors: &[f64]) -> String {
    let mut s = String::from("vertex,error\n");
    for (i, e) in errors.iter().enumerate() {
        let _ = writeln!(s, "{i},{e:.9e}");
    }
    s
}
