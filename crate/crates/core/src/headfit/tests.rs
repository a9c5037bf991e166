use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::embed::{ArchConfig, EmbeddingPair};
use crate::geometry::{icosphere, Vec3};
use crate::synth::orbit_cameras;
use crate::triangulation::Landmarks2D;

fn proxy() -> RiggedTemplate {
    RiggedTemplate::head_proxy(3, 6, 4, 60).unwrap()
}

fn random_params(t: &RiggedTemplate, rot: RotationParam, seed: u64) -> HeadParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = HeadParams::neutral(t, rot);
    for c in p.shape.iter_mut().chain(p.expression.iter_mut()) {
        *c = rng.random_range(-1.0..1.0);
    }
    let root = RotationParam::Euler
        .decode(&[rng.random_range(-0.2..0.2), rng.random_range(-0.3..0.3), rng.random_range(-0.2..0.2)])
        .unwrap();
    let jaw = RotationParam::Euler.decode(&[rng.random_range(0.05..0.25), 0.0, 0.0]).unwrap();
    let d = rot.dim();
    p.pose[..d].copy_from_slice(&rot.encode(&root));
    p.pose[d..2 * d].copy_from_slice(&rot.encode(&jaw));
    p.translation = Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
    p
}

#[test]
fn identity_pose_is_bit_exact() {
    let t = proxy();
    for rot in [RotationParam::Euler, RotationParam::SixD, RotationParam::Matrix] {
        let m = t.pose_mesh(&HeadParams::neutral(&t, rot)).unwrap();
        assert_eq!(m.vertices, t.rest.vertices);
    }
}

#[test]
fn root_rotation_and_translation_move_everything() {
    let t = proxy();
    let r = RotationParam::Euler.decode(&[0.4, -0.7, 1.1]).unwrap();
    let mut p = HeadParams::neutral(&t, RotationParam::SixD);
    p.pose[..6].copy_from_slice(&RotationParam::SixD.encode(&r));
    let m = t.pose_mesh(&p).unwrap();
    for (a, b) in m.vertices.iter().zip(&t.rest.vertices) {
        assert!((a - r * b).norm() < 1e-14);
    }
    let mut q = random_params(&t, RotationParam::Euler, 3);
    let base = t.pose_mesh(&q).unwrap();
    let shift = Vec3::new(0.3, -1.2, 2.0);
    q.translation += shift;
    let moved = t.pose_mesh(&q).unwrap();
    for (a, b) in moved.vertices.iter().zip(&base.vertices) {
        assert!((a - b - shift).norm() < 1e-13);
    }
}

#[test]
fn rotation_parameterizations() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for rot in [RotationParam::Euler, RotationParam::SixD] {
        for _ in 0..20 {
            let p: Vec<f64> = (0..rot.dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
            let (r, d) = rot.decode_with_derivs(&p).unwrap();
            assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
            let back = rot.decode(&rot.encode(&r)).unwrap();
            assert!((back - r).abs().max() < 1e-12);
            let h = 1e-6;
            for k in 0..rot.dim() {
                let (mut a, mut b) = (p.clone(), p.clone());
                a[k] += h;
                b[k] -= h;
                let fd = (rot.decode(&a).unwrap() - rot.decode(&b).unwrap()) / (2.0 * h);
                assert!((fd - d[k]).abs().max() < 1e-8, "{rot:?} {k}");
            }
        }
    }
    assert!(RotationParam::Matrix.decode(&[2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).is_err());
    assert!(RotationParam::SixD.decode(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]).is_err());
    assert!(RotationParam::Euler.decode(&[0.0, f64::NAN, 0.0]).is_err());
}

#[test]
fn template_validation_and_round_trips() {
    let t = proxy();
    for row in &t.weights {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.bin");
    t.save(&path).unwrap();
    assert_eq!(RiggedTemplate::load(&path).unwrap(), t);

    let mut bad = t.clone();
    bad.weights[0][0] += 0.1;
    assert!(bad.validate().is_err());
    let mut bad = t.clone();
    bad.joints[1].parent = Some(1);
    assert!(bad.validate().is_err());

    let p = random_params(&t, RotationParam::SixD, 4);
    let json = serde_json::to_string(&p).unwrap();
    assert_eq!(serde_json::from_str::<HeadParams>(&json).unwrap(), p);
    let mut wrong = p.clone();
    wrong.shape.pop();
    assert!(t.pose_mesh(&wrong).is_err());
}

#[test]
fn fit_objective_gradient_matches_finite_differences() {
    let t = proxy();
    let scan = t.pose_mesh(&random_params(&t, RotationParam::Euler, 1)).unwrap();
    let pair = EmbeddingPair::with_random_codes(&ArchConfig::small(16, 2), 2, &["scan"]).unwrap();
    let targets = t.landmark_positions(&scan.vertices);
    for (term, rot) in [
        (SurfaceTerm::Implicit, RotationParam::Euler),
        (SurfaceTerm::Implicit, RotationParam::SixD),
        (SurfaceTerm::NearestNeighbor, RotationParam::SixD),
        (SurfaceTerm::ClosestSurfacePoint, RotationParam::Euler),
    ] {
        let init = random_params(&t, rot, 7);
        let cfg = Fit3dConfig {
            surface_term: term,
            lambda_prior: 0.01,
            ..Default::default()
        };
        let prob = Fit3dProblem::new(&t, &scan, Some((&pair, "scan")), &targets, &init, &cfg).unwrap();
        let x = init.to_vec();
        let (_, g) = prob.evaluate(&x).unwrap();
        let h = 1e-6;
        for k in 0..x.len() {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[k] += h;
            b[k] -= h;
            let fd = (prob.evaluate(&a).unwrap().0 - prob.evaluate(&b).unwrap().0) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-3 * fd.abs().max(1e-3), "{term:?} {rot:?} {k}: {fd} vs {}", g[k]);
        }
    }
}

#[test]
fn nearest_neighbor_fit_recovers_model_generated_scan() {
    let t = proxy();
    let truth = random_params(&t, RotationParam::SixD, 11);
    let scan = t.pose_mesh(&truth).unwrap();
    let targets = t.landmark_positions(&scan.vertices);
    let cfg = Fit3dConfig {
        surface_term: SurfaceTerm::NearestNeighbor,
        eval_samples: 2000,
        ..Default::default()
    };
    let init = HeadParams::neutral(&t, RotationParam::SixD);
    let res = fit_3d(&t, &scan, None, &targets, &init, &cfg).unwrap();
    assert!(res.warning.is_none());
    assert!(res.objective * 100.0 <= res.initial_objective);
    let fitted = t.pose_mesh(&res.params).unwrap();
    let rms = (fitted.vertices.iter().zip(&scan.vertices).map(|(a, b)| (a - b).norm_squared()).sum::<f64>()
        / scan.vertices.len() as f64)
        .sqrt();
    assert!(rms < 0.01 * scan.bbox_diagonal(), "rms {rms}");
    assert!(res.scan_to_mesh.mean < 0.01 * scan.bbox_diagonal());
    assert!(res.history.windows(2).all(|w| w[1] <= w[0]));
    // the implicit term cannot run without an embedding
    assert!(fit_3d(&t, &scan, None, &targets, &init, &Fit3dConfig::default()).is_err());
}

#[test]
fn multi_view_fit_recovers_projections() {
    let t = proxy();
    let truth = random_params(&t, RotationParam::SixD, 5);
    let lm = t.landmark_positions(&t.pose(&truth).unwrap().vertices);
    let cams = orbit_cameras(4, 4.0, 500.0).unwrap();
    let obs = Landmarks2D::from_points(&cams, &lm);
    let init = HeadParams::neutral(&t, RotationParam::SixD);
    let res = fit_2d(&t, &cams, &obs, &init, &Fit2dConfig::default()).unwrap();
    assert!(!res.depth_ambiguous);
    assert_eq!(res.views_used, 4);
    assert!(res.reprojection_rms < 0.1, "{}", res.reprojection_rms);

    let one = Landmarks2D::from_points(&cams[..1], &lm);
    let single = fit_2d(&t, &cams[..1], &one, &init, &Fit2dConfig::default()).unwrap();
    assert!(single.depth_ambiguous && single.warning.is_some());
    assert!(single.reprojection_rms.is_finite());

    let pinned = fit_2d(
        &t,
        &cams,
        &obs,
        &init,
        &Fit2dConfig {
            lambda: 1e12,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(pinned.params.shape.iter().chain(&pinned.params.expression).all(|c| c.abs() < 1e-6));

    let mut hidden = obs.clone();
    hidden.visible.iter_mut().for_each(|v| v.iter_mut().for_each(|b| *b = false));
    assert!(fit_2d(&t, &cams, &hidden, &init, &Fit2dConfig::default()).is_err());
}

#[test]
fn scan_to_mesh_offsets() {
    let s = icosphere(4).unwrap();
    assert!(scan_to_mesh_error(&s, &s, 5000, 1).unwrap().mean < 1e-12);
    let big = s.with_vertices(s.vertices.iter().map(|v| v * 1.01).collect()).unwrap();
    let e = scan_to_mesh_error(&big, &s, 5000, 1).unwrap();
    assert!((e.mean - 0.01).abs() < 5e-4, "{}", e.mean);
    // directional: the inner sphere is farther from the outer one's flat faces
    let inner = scan_to_mesh_error(&s, &big, 5000, 1).unwrap();
    assert!(inner.mean != e.mean);
}

#[test]
fn synthetic_head_scan_is_deterministic() {
    let spec = HeadScanSpec::default();
    let a = synthetic_head_scan(&spec).unwrap();
    let b = synthetic_head_scan(&spec).unwrap();
    assert_eq!(a.scan.vertices, b.scan.vertices);
    assert_eq!(a.landmarks, b.landmarks);
    let clean = synthetic_head_scan(&HeadScanSpec {
        subdivisions: 0,
        detail: 0.0,
        landmark_noise: 0.0,
        ..spec
    })
    .unwrap();
    assert_eq!(clean.scan.vertices, clean.posed.vertices);
    assert_eq!(clean.landmarks, clean.template.landmark_positions(&clean.posed.vertices));
}
