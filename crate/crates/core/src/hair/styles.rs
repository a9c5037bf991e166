use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scalp::ScalpChart;
use super::strand::{FrameTag, Strand};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Parameters of a procedural strand field: strands leave the scalp along
/// the normal, bend toward a swept gravity direction and wave sideways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HairStyle {
    pub length: f64,
    /// Rate at which the growth direction turns toward gravity, per unit length.
    pub droop: f64,
    /// Horizontal sweep added to gravity, and its azimuth in radians.
    pub sweep: f64,
    pub sweep_azimuth: f64,
    pub wave_amplitude: f64,
    /// Number of wave periods along the strand.
    pub wave_periods: f64,
}

impl HairStyle {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        HairStyle {
            length: rng.random_range(0.3..1.0),
            droop: rng.random_range(1.0..6.0),
            sweep: rng.random_range(0.0..0.8),
            sweep_azimuth: rng.random_range(0.0..std::f64::consts::TAU),
            wave_amplitude: rng.random_range(0.0..0.06),
            wave_periods: rng.random_range(0.5..2.0),
        }
    }

    /// World-space strand of `k` points rooted at `root` with outward `normal`.
    pub fn grow(&self, root: Vec3, normal: Vec3, k: usize) -> Result<Strand> {
        if k < 2 || !(self.length > 0.0) {
            return Err(Error::validation("a strand needs k ≥ 2 and positive length"));
        }
        let n = normal.normalize();
        let gravity = (Vec3::new(
            self.sweep * self.sweep_azimuth.cos(),
            self.sweep * self.sweep_azimuth.sin(),
            -1.0,
        ))
        .normalize();
        let ds = self.length / (k - 1) as f64;
        let mut p = root;
        let mut pts = Vec::with_capacity(k);
        pts.push(p);
        for i in 1..k {
            let s = (i as f64 - 0.5) * ds;
            let w = (s * self.droop).min(1.0);
            let dir = (n * (1.0 - w) + gravity * w)
                .try_normalize(1e-12)
                .unwrap_or(gravity);
            let side = n.cross(&dir).try_normalize(1e-12).unwrap_or_else(|| dir.cross(&Vec3::x()).normalize());
            let phase = std::f64::consts::TAU * self.wave_periods * s / self.length;
            let wobble = side * (self.wave_amplitude * std::f64::consts::TAU * self.wave_periods / self.length * phase.cos());
            p += (dir + wobble) * ds;
            pts.push(p);
        }
        Strand::new(pts, FrameTag::World)
    }
}

/// One strand of `k` points rooted at the center of every `res × res` texel
/// the chart covers.
pub fn synthetic_hairstyle(chart: &ScalpChart, style: &HairStyle, res: usize, k: usize) -> Result<Vec<Strand>> {
    let mut out = Vec::new();
    for j in 0..res {
        for i in 0..res {
            let uv = [(i as f64 + 0.5) / res as f64, (j as f64 + 0.5) / res as f64];
            if let Some(s) = chart.locate_uv(uv) {
                let frame = chart.frame_at(&s)?;
                out.push(style.grow(s.position, frame.normal, k)?);
            }
        }
    }
    Ok(out)
}
