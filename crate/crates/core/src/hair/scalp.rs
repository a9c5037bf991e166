use std::path::Path;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::legendre::{LegendreBasis, StrandCoeffs};
use super::strand::{decode_strand, encode_strand, from_tbn, to_tbn, FrameTag, RootFrame, Strand};
use crate::diffnet::Bundle;
use crate::error::{Error, Result};
use crate::geometry::{icosphere, SurfaceLocator, SurfaceSample, TriMesh, Vec3};

pub const SCALP_MAP_VERSION: u32 = 1;
pub const DEFAULT_RESOLUTION: usize = 256;

/// A scalp surface with one UV coordinate per vertex. The UV map must be
/// injective over the faces.
#[derive(Debug, Clone)]
pub struct ScalpChart {
    pub mesh: TriMesh,
    pub uv: Vec<[f64; 2]>,
    grid: UvGrid,
}

#[derive(Debug, Clone)]
struct UvGrid {
    n: usize,
    cells: Vec<Vec<usize>>,
}

const UV_GRID: usize = 64;
const UV_EPS: f64 = 1e-12;

impl ScalpChart {
    pub fn new(mesh: TriMesh, uv: Vec<[f64; 2]>) -> Result<Self> {
        mesh.validate()?;
        if uv.len() != mesh.vertices.len() {
            return Err(Error::validation("one UV coordinate per scalp vertex is required"));
        }
        if !uv.iter().flatten().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::validation("UV coordinates must lie in [0, 1]"));
        }
        let n = UV_GRID;
        let mut cells = vec![Vec::new(); n * n];
        for (f, face) in mesh.faces.iter().enumerate() {
            let us = face.map(|i| uv[i][0]);
            let vs = face.map(|i| uv[i][1]);
            let cell = |x: f64| ((x * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
            let (u0, u1) = (cell(min3(us)), cell(max3(us)));
            let (v0, v1) = (cell(min3(vs)), cell(max3(vs)));
            for j in v0..=v1 {
                for i in u0..=u1 {
                    cells[j * n + i].push(f);
                }
            }
        }
        Ok(ScalpChart {
            mesh,
            uv,
            grid: UvGrid { n, cells },
        })
    }

    /// Faces of a unit icosphere lying in `z ≥ 0`, charted by orthographic
    /// projection `uv = ((x + 1)/2, (y + 1)/2)`.
    pub fn upper_hemisphere(depth: u32) -> Result<Self> {
        let sphere = icosphere(depth)?;
        let faces: Vec<[usize; 3]> = sphere
            .faces
            .iter()
            .filter(|f| f.iter().all(|&i| sphere.vertices[i].z >= -1e-12))
            .copied()
            .collect();
        let mut remap = vec![usize::MAX; sphere.vertices.len()];
        let mut vertices = Vec::new();
        for f in &faces {
            for &i in f {
                if remap[i] == usize::MAX {
                    remap[i] = vertices.len();
                    vertices.push(sphere.vertices[i]);
                }
            }
        }
        let faces = faces.iter().map(|f| f.map(|i| remap[i])).collect();
        let uv = vertices
            .iter()
            .map(|v| [((v.x + 1.0) / 2.0).clamp(0.0, 1.0), ((v.y + 1.0) / 2.0).clamp(0.0, 1.0)])
            .collect();
        ScalpChart::new(TriMesh::new(vertices, faces)?, uv)
    }

    pub fn uv_of(&self, s: &SurfaceSample) -> [f64; 2] {
        let f = self.mesh.faces[s.face_index];
        let mut out = [0.0; 2];
        for k in 0..3 {
            out[0] += s.barycentric[k] * self.uv[f[k]][0];
            out[1] += s.barycentric[k] * self.uv[f[k]][1];
        }
        out
    }

    /// Surface point whose UV coordinate is `uv`, if the chart covers it.
    pub fn locate_uv(&self, uv: [f64; 2]) -> Option<SurfaceSample> {
        let n = self.grid.n;
        let cell = |x: f64| ((x * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
        for &f in &self.grid.cells[cell(uv[1]) * n + cell(uv[0])] {
            let [a, b, c] = self.mesh.faces[f].map(|i| self.uv[i]);
            let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            if det.abs() < 1e-300 {
                continue;
            }
            let l1 = ((uv[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (uv[1] - a[1])) / det;
            let l2 = ((b[0] - a[0]) * (uv[1] - a[1]) - (uv[0] - a[0]) * (b[1] - a[1])) / det;
            let l0 = 1.0 - l1 - l2;
            if l0 >= -UV_EPS && l1 >= -UV_EPS && l2 >= -UV_EPS {
                return Some(SurfaceSample::from_barycentric(&self.mesh, f, [l0, l1, l2]));
            }
        }
        None
    }

    /// Outward face normal and the surface direction of increasing `u`.
    pub fn frame_at(&self, s: &SurfaceSample) -> Result<RootFrame> {
        let f = self.mesh.faces[s.face_index];
        let [p0, p1, p2] = self.mesh.face_vertices(s.face_index);
        let [a, b, c] = f.map(|i| self.uv[i]);
        let (e1, e2) = (p1 - p0, p2 - p0);
        let (du1, dv1, du2, dv2) = (b[0] - a[0], b[1] - a[1], c[0] - a[0], c[1] - a[1]);
        let det = du1 * dv2 - du2 * dv1;
        let tangent = if det.abs() > 1e-300 {
            (e1 * dv2 - e2 * dv1) / det
        } else {
            e1
        };
        RootFrame::from_normal_tangent(s.position, self.mesh.face_normal(s.face_index), tangent)
    }
}

fn min3(v: [f64; 3]) -> f64 {
    v[0].min(v[1]).min(v[2])
}

fn max3(v: [f64; 3]) -> f64 {
    v[0].max(v[1]).max(v[2])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Texel {
    pub coeffs: StrandCoeffs,
    pub root: SurfaceSample,
    pub frame: RootFrame,
}

/// Row-major `width × height` grid of optional strand texels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalpMap {
    pub width: usize,
    pub height: usize,
    pub basis: LegendreBasis,
    pub texels: Vec<Option<Texel>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BakeOptions {
    pub width: usize,
    pub height: usize,
    /// Roots farther than this from the chart surface are skipped.
    pub max_root_distance: f64,
}

impl Default for BakeOptions {
    fn default() -> Self {
        BakeOptions {
            width: DEFAULT_RESOLUTION,
            height: DEFAULT_RESOLUTION,
            max_root_distance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BakeStats {
    pub input: usize,
    pub baked: usize,
    /// Strands dropped because another root was nearer the texel center.
    pub collisions: usize,
    pub off_chart: usize,
}

impl BakeStats {
    pub fn collision_rate(&self) -> f64 {
        if self.input == 0 {
            0.0
        } else {
            self.collisions as f64 / self.input as f64
        }
    }
}

fn texel_center(i: usize, j: usize, w: usize, h: usize) -> [f64; 2] {
    [(i as f64 + 0.5) / w as f64, (j as f64 + 0.5) / h as f64]
}

fn texel_of(uv: [f64; 2], w: usize, h: usize) -> (usize, usize) {
    let i = ((uv[0] * w as f64).floor() as usize).min(w - 1);
    let j = ((uv[1] * h as f64).floor() as usize).min(h - 1);
    (i, j)
}

fn check_dims(w: usize, h: usize) -> Result<()> {
    if w == 0 || h == 0 {
        return Err(Error::validation("scalp map resolution must be positive"));
    }
    Ok(())
}

/// Assigns each world-space strand to the texel containing its root's UV
/// coordinate and stores its coefficients in the root's TBN frame.
pub fn bake_scalp_map(
    strands: &[Strand],
    chart: &ScalpChart,
    basis: &LegendreBasis,
    opts: &BakeOptions,
) -> Result<(ScalpMap, BakeStats)> {
    check_dims(opts.width, opts.height)?;
    let (w, h) = (opts.width, opts.height);
    let locator = SurfaceLocator::new(&chart.mesh)?;
    let mut texels: Vec<Option<(f64, Texel)>> = vec![None; w * h];
    let mut stats = BakeStats {
        input: strands.len(),
        ..Default::default()
    };
    for strand in strands {
        if strand.frame != FrameTag::World {
            return Err(Error::validation("bake expects world-space strands"));
        }
        let hit = locator.closest(&strand.root())?;
        if hit.distance > opts.max_root_distance {
            stats.off_chart += 1;
            continue;
        }
        let root = SurfaceSample::from_barycentric(&chart.mesh, hit.face_index, hit.barycentric);
        let uv = chart.uv_of(&root);
        let (i, j) = texel_of(uv, w, h);
        let c = texel_center(i, j, w, h);
        let d = (uv[0] - c[0]).hypot(uv[1] - c[1]);
        let slot = &mut texels[j * w + i];
        if let Some((best, _)) = slot {
            stats.collisions += 1;
            if d >= *best {
                continue;
            }
        }
        let frame = chart.frame_at(&root)?;
        let coeffs = encode_strand(&to_tbn(strand, &frame)?, basis)?;
        *slot = Some((d, Texel { coeffs, root, frame }));
    }
    let texels: Vec<Option<Texel>> = texels.into_iter().map(|t| t.map(|(_, t)| t)).collect();
    stats.baked = texels.iter().flatten().count();
    if stats.collisions > 0 || stats.off_chart > 0 {
        info!(
            "bake: {} strands, {} collisions ({:.2}%), {} off chart",
            stats.input,
            stats.collisions,
            100.0 * stats.collision_rate(),
            stats.off_chart
        );
    }
    Ok((
        ScalpMap {
            width: w,
            height: h,
            basis: *basis,
            texels,
        },
        stats,
    ))
}

impl ScalpMap {
    pub fn empty(width: usize, height: usize, basis: LegendreBasis) -> Result<Self> {
        check_dims(width, height)?;
        Ok(ScalpMap {
            width,
            height,
            basis,
            texels: vec![None; width * height],
        })
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&Texel> {
        self.texels.get(j * self.width + i).and_then(Option::as_ref)
    }

    /// Row-major index of the texel containing `uv`.
    pub fn texel_index(&self, uv: [f64; 2]) -> usize {
        let (i, j) = texel_of(uv, self.width, self.height);
        j * self.width + i
    }

    pub fn valid_count(&self) -> usize {
        self.texels.iter().flatten().count()
    }

    pub fn mask(&self) -> Vec<bool> {
        self.texels.iter().map(Option::is_some).collect()
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(self.width, self.height)?;
        if self.texels.len() != self.width * self.height {
            return Err(Error::validation("texel count differs from width × height"));
        }
        for t in self.texels.iter().flatten() {
            t.frame.validate()?;
            if t.coeffs.coeffs.len() != self.basis.len() {
                return Err(Error::validation("texel coefficient degree differs from the basis"));
            }
        }
        Ok(())
    }

    /// Number of coefficient channels per texel (3 axes × basis size).
    pub fn channels(&self) -> usize {
        3 * self.basis.len()
    }

    /// Coefficients as a `channels × height × width` array; invalid texels
    /// are zero. Channel `a·(degree+1) + n` holds degree `n` of axis `a`.
    pub fn coeff_channels(&self) -> Vec<f64> {
        let (c, hw) = (self.channels(), self.width * self.height);
        let mut out = vec![0.0; c * hw];
        for (p, t) in self.texels.iter().enumerate() {
            if let Some(t) = t {
                for (k, v) in t.coeffs.to_channels().into_iter().enumerate() {
                    out[k * hw + p] = v;
                }
            }
        }
        out
    }

    /// Copy of this map with valid-texel coefficients replaced from a
    /// `channels × height × width` array. Roots, frames and mask are kept.
    pub fn with_coeff_channels(&self, data: &[f64]) -> Result<ScalpMap> {
        let (c, hw) = (self.channels(), self.width * self.height);
        if data.len() != c * hw {
            return Err(Error::validation(format!(
                "expected {} coefficient values, got {}",
                c * hw,
                data.len()
            )));
        }
        let mut out = self.clone();
        for (p, t) in out.texels.iter_mut().enumerate() {
            if let Some(t) = t {
                let ch: Vec<f64> = (0..c).map(|k| data[k * hw + p]).collect();
                t.coeffs = StrandCoeffs::from_channels(&ch)?;
            }
        }
        Ok(out)
    }

    /// Resamples to `width × height`. A target texel is valid when the
    /// source texel under its center is valid and the chart covers it;
    /// coefficients and frames are bilinear over valid neighbours, frames
    /// re-orthonormalized, roots re-located on the chart.
    pub fn resize(&self, chart: &ScalpChart, width: usize, height: usize) -> Result<ScalpMap> {
        check_dims(width, height)?;
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let mut out = ScalpMap::empty(width, height, self.basis)?;
        for j in 0..height {
            for i in 0..width {
                let uv = texel_center(i, j, width, height);
                let (si, sj) = texel_of(uv, self.width, self.height);
                if self.get(si, sj).is_none() {
                    continue;
                }
                let Some(root) = chart.locate_uv(uv) else {
                    continue;
                };
                out.texels[j * width + i] = Some(self.interpolate(uv, root)?);
            }
        }
        debug!(
            "resize {}x{} -> {}x{}: {} -> {} valid texels",
            self.width,
            self.height,
            width,
            height,
            self.valid_count(),
            out.valid_count()
        );
        Ok(out)
    }

    fn interpolate(&self, uv: [f64; 2], root: SurfaceSample) -> Result<Texel> {
        let x = uv[0] * self.width as f64 - 0.5;
        let y = uv[1] * self.height as f64 - 0.5;
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let mut coeffs = vec![Vec3::zeros(); self.basis.len()];
        let (mut t, mut n) = (Vec3::zeros(), Vec3::zeros());
        let mut wsum = 0.0;
        for (dx, dy, w) in [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            let (i, j) = (x0 as isize + dx, y0 as isize + dy);
            if i < 0 || j < 0 || i >= self.width as isize || j >= self.height as isize || w == 0.0 {
                continue;
            }
            if let Some(s) = self.get(i as usize, j as usize) {
                for (c, sc) in coeffs.iter_mut().zip(&s.coeffs.coeffs) {
                    *c += sc * w;
                }
                t += s.frame.tangent * w;
                n += s.frame.normal * w;
                wsum += w;
            }
        }
        if wsum <= 0.0 {
            return Err(Error::numeric("no valid neighbour to interpolate from"));
        }
        for c in &mut coeffs {
            *c /= wsum;
        }
        let frame = RootFrame::from_normal_tangent(root.position, n, t)?;
        Ok(Texel {
            coeffs: StrandCoeffs { coeffs },
            root,
            frame,
        })
    }

    /// Decodes one world-space strand of `k` points per valid texel, in
    /// row-major texel order.
    pub fn strands(&self, k: usize) -> Result<Vec<Strand>> {
        self.texels
            .iter()
            .flatten()
            .map(|t| {
                let local = decode_strand(&t.coeffs, k, &self.basis)?;
                let frame = RootFrame {
                    origin: t.root.position,
                    ..t.frame
                };
                from_tbn(&local, &frame)
            })
            .collect()
    }

    pub fn to_bundle(&self) -> Result<Bundle> {
        let mut b = Bundle::new("scalp_map");
        b.set_meta("version", &SCALP_MAP_VERSION)?;
        b.set_meta("width", &self.width)?;
        b.set_meta("height", &self.height)?;
        b.set_meta("degree", &self.basis.degree)?;
        let n = self.texels.len();
        let (mut mask, mut faces, mut bary, mut frames) =
            (Vec::with_capacity(n), Vec::with_capacity(n), Vec::new(), Vec::new());
        for t in &self.texels {
            match t {
                Some(t) => {
                    mask.push(1.0);
                    faces.push(t.root.face_index as f64);
                    bary.extend_from_slice(&t.root.barycentric);
                    bary.extend(t.root.position.iter());
                    for v in [t.frame.tangent, t.frame.bitangent, t.frame.normal] {
                        frames.extend(v.iter());
                    }
                }
                None => {
                    mask.push(0.0);
                    faces.push(0.0);
                    bary.extend([0.0; 6]);
                    frames.extend([0.0; 9]);
                }
            }
        }
        b.push_array("mask", mask);
        b.push_array("faces", faces);
        b.push_array("roots", bary);
        b.push_array("frames", frames);
        b.push_array("coeffs", self.coeff_channels());
        Ok(b)
    }

    pub fn from_bundle(b: &Bundle) -> Result<Self> {
        b.expect_kind("scalp_map")?;
        let version: u32 = b.meta_value("version")?;
        if version != SCALP_MAP_VERSION {
            return Err(Error::Format(format!("unsupported scalp map version {version}")));
        }
        let width: usize = b.meta_value("width")?;
        let height: usize = b.meta_value("height")?;
        let basis = LegendreBasis::new(b.meta_value("degree")?);
        let n = width * height;
        let (mask, faces, roots, frames, coeffs) =
            (b.array("mask")?, b.array("faces")?, b.array("roots")?, b.array("frames")?, b.array("coeffs")?);
        let c = 3 * basis.len();
        if mask.len() != n || faces.len() != n || roots.len() != 6 * n || frames.len() != 9 * n || coeffs.len() != c * n
        {
            return Err(Error::Format("scalp map array sizes do not match its resolution".into()));
        }
        let mut texels = Vec::with_capacity(n);
        for p in 0..n {
            if mask[p] == 0.0 {
                texels.push(None);
                continue;
            }
            let r = &roots[6 * p..6 * p + 6];
            let f = &frames[9 * p..9 * p + 9];
            let v = |k: usize| Vec3::new(f[3 * k], f[3 * k + 1], f[3 * k + 2]);
            let position = Vec3::new(r[3], r[4], r[5]);
            let ch: Vec<f64> = (0..c).map(|k| coeffs[k * n + p]).collect();
            texels.push(Some(Texel {
                coeffs: StrandCoeffs::from_channels(&ch)?,
                root: SurfaceSample {
                    face_index: faces[p] as usize,
                    barycentric: [r[0], r[1], r[2]],
                    position,
                },
                frame: RootFrame {
                    origin: position,
                    tangent: v(0),
                    bitangent: v(1),
                    normal: v(2),
                },
            }));
        }
        let map = ScalpMap {
            width,
            height,
            basis,
            texels,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_bundle()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ScalpMap::from_bundle(&Bundle::load(path)?)
    }
}

/// Resizes a map to `width × height` and decodes `k` points per strand.
pub fn sample_scalp_map(
    map: &ScalpMap,
    chart: &ScalpChart,
    width: usize,
    height: usize,
    k: usize,
) -> Result<Vec<Strand>> {
    map.resize(chart, width, height)?.strands(k)
}
