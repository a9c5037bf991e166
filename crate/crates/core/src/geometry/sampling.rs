use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mesh::{TriMesh, Vec3};
use crate::error::{Error, Result};

/// A point on a mesh surface, stored with its face and barycentric weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSample {
    pub face_index: usize,
    pub barycentric: [f64; 3],
    pub position: Vec3,
}

impl SurfaceSample {
    pub fn from_barycentric(mesh: &TriMesh, face_index: usize, barycentric: [f64; 3]) -> Self {
        let [a, b, c] = mesh.face_vertices(face_index);
        SurfaceSample {
            face_index,
            barycentric,
            position: a * barycentric[0] + b * barycentric[1] + c * barycentric[2],
        }
    }
}

/// Precomputed area CDF for repeated sampling from the same mesh.
#[derive(Debug, Clone)]
pub struct AreaSampler {
    cdf: Vec<f64>,
}

impl AreaSampler {
    pub fn new(mesh: &TriMesh) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::DegenerateGeometry("mesh has no faces".into()));
        }
        let mut acc = 0.0;
        let cdf: Vec<f64> = (0..mesh.faces.len())
            .map(|f| {
                acc += mesh.face_area(f);
                acc
            })
            .collect();
        if !(acc > 0.0) || !acc.is_finite() {
            return Err(Error::DegenerateGeometry(format!("total surface area is {acc}")));
        }
        Ok(AreaSampler { cdf })
    }

    pub fn sample<R: Rng + ?Sized>(&self, mesh: &TriMesh, rng: &mut R) -> SurfaceSample {
        let total = *self.cdf.last().unwrap();
        let target = rng.random::<f64>() * total;
        let face = self
            .cdf
            .partition_point(|&c| c <= target)
            .min(self.cdf.len() - 1);
        // Uniform point in a triangle via the square-root warp.
        let r1: f64 = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        let w0 = 1.0 - r1;
        let w1 = r1 * (1.0 - r2);
        let w2 = 1.0 - w0 - w1;
        SurfaceSample::from_barycentric(mesh, face, [w0, w1, w2.max(0.0)])
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, mesh: &TriMesh, n: usize, rng: &mut R) -> Vec<SurfaceSample> {
        (0..n).map(|_| self.sample(mesh, rng)).collect()
    }
}

/// Area-weighted uniform samples on the surface, deterministic in `seed`.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<Vec<SurfaceSample>> {
    let sampler = AreaSampler::new(mesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.sample_n(mesh, n, &mut rng))
}

/// Uniform point on the unit sphere (Marsaglia 1972).
pub fn sample_unit_sphere<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let a: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        let s = a * a + b * b;
        if s < 1.0 && s > 0.0 {
            let k = 2.0 * (1.0 - s).sqrt();
            return Vec3::new(a * k, b * k, 1.0 - 2.0 * s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles() -> TriMesh {
        // Areas 9/2 and 1/2.
        TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(3.0, 0.0, 0.0),
                Vec3::new(0.0, 3.0, 0.0),
                Vec3::new(10.0, 0.0, 0.0),
                Vec3::new(11.0, 0.0, 0.0),
                Vec3::new(10.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap()
    }

    #[test]
    fn barycentric_weights_are_valid() {
        let tri = TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
        )
        .unwrap();
        for s in sample_surface(&tri, 1000, 3).unwrap() {
            assert!(s.barycentric.iter().all(|&w| w >= 0.0));
            assert!((s.barycentric.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let expect = tri.vertices[1] * s.barycentric[1] + tri.vertices[2] * s.barycentric[2];
            assert!((s.position - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn area_ratio_is_respected() {
        let samples = sample_surface(&two_triangles(), 100_000, 11).unwrap();
        let big = samples.iter().filter(|s| s.face_index == 0).count() as f64;
        let small = samples.len() as f64 - big;
        let ratio = big / small;
        assert!((ratio / 9.0 - 1.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn chi_square_over_faces() {
        let mesh = crate::geometry::icosphere(1).unwrap();
        let n = 100_000;
        let samples = sample_surface(&mesh, n, 5).unwrap();
        let total = mesh.total_area();
        let mut counts = vec![0usize; mesh.faces.len()];
        for s in &samples {
            counts[s.face_index] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .enumerate()
            .map(|(f, &c)| {
                let e = n as f64 * mesh.face_area(f) / total;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        // 79 degrees of freedom; the p = 0.001 critical value is 122.
        assert!(chi2 < 122.0, "chi2 {chi2}");
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let m = two_triangles();
        assert_eq!(sample_surface(&m, 50, 9).unwrap(), sample_surface(&m, 50, 9).unwrap());
    }

    #[test]
    fn zero_area_mesh_is_rejected() {
        let m = TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(sample_surface(&m, 3, 0), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn sphere_samples_are_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            assert!((sample_unit_sphere(&mut rng).norm() - 1.0).abs() < 1e-12);
        }
    }
}
