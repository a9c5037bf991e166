//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. `ACCEPTANCE_ONLY=3,12` runs a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sphembed::diffnet::*;
use sphembed::embed::*;
use sphembed::generative::*;
use sphembed::geometry::*;
use sphembed::hair::*;
use sphembed::headfit::*;
use sphembed::registration::*;
use sphembed::synth::*;
use sphembed::triangulation::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel_vec(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if n == 0.0 {
        d
    } else {
        d / n
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    sample_unit_sphere(rng)
}

// 1. reverse mode against central differences

fn gradient_check(spec: NetSpec, seed: u64) -> f64 {
    let net = DenseNet::new(spec.clone(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    let batch = 3;
    let x = Array2::from_shape_fn((batch, spec.input_dim), |_| rng.random_range(-1.0..1.0));
    let w = Array2::from_shape_fn((batch, spec.output_dim), |_| rng.random_range(-1.0..1.0));
    let loss = |n: &DenseNet, x: &Array2<f64>| -> f64 { (&n.forward_batch(x.view()).unwrap() * &w).sum() };
    let (_, tape) = net.forward_tape(x.view()).unwrap();
    let mut g = vec![0.0; net.param_count()];
    let dx = net.backward(&tape, w.view(), Some(&mut g)).unwrap();
    let h = 1e-6;
    let mut fd = vec![0.0; g.len()];
    let mut probe = net.clone();
    for i in 0..g.len() {
        let p0 = probe.params()[i];
        probe.params_mut()[i] = p0 + h;
        let lp = loss(&probe, &x);
        probe.params_mut()[i] = p0 - h;
        let lm = loss(&probe, &x);
        probe.params_mut()[i] = p0;
        fd[i] = (lp - lm) / (2.0 * h);
    }
    let mut fdx = vec![0.0; x.len()];
    for (k, v) in fdx.iter_mut().enumerate() {
        let (r, c) = (k / spec.input_dim, k % spec.input_dim);
        let mut xp = x.clone();
        xp[[r, c]] += h;
        let mut xm = x.clone();
        xm[[r, c]] -= h;
        *v = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * h);
    }
    let dx: Vec<f64> = dx.iter().copied().collect();
    rel_vec(&g, &fd).max(rel_vec(&dx, &fdx))
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let kinds: [(&str, Activation, bool); 5] = [
        ("sine", Activation::Sine, false),
        ("tanh", Activation::Tanh, false),
        ("relu", Activation::Relu, false),
        ("identity", Activation::Identity, false),
        ("relu+fourier", Activation::Relu, true),
    ];
    let mut worst = Vec::new();
    for (name, act, fourier) in kinds {
        let mut w: f64 = 0.0;
        for k in 0..20 {
            let mut spec = NetSpec::siren(
                rng.random_range(1..=4),
                rng.random_range(1..=3),
                rng.random_range(2..=8),
                rng.random_range(1..=3),
            )
            .with_activation(act);
            if fourier {
                spec = spec.with_fourier(rng.random_range(2..=6), 2.0);
            }
            w = w.max(gradient_check(spec, 100 * k + act as u64));
        }
        worst.push((name, w));
    }
    let secs = t.elapsed().as_secs_f64();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let list: Vec<String> = worst.iter().map(|(n, w)| format!("{n} {w:.1e}")).collect();
    outcome(
        max < 1e-4 && secs < 10.0,
        format!("worst relative error over 20 nets per type: {} (< 1e-4); {secs:.1} s (< 10 s)", list.join(", ")),
    )
}

// 2. Hessian stencil against nested differences of the Jacobian

fn nested_fd_frobenius(g: &dyn Fn(&Vec3) -> Vec3, y: &Vec3, h: f64) -> f64 {
    let jac = |p: &Vec3| -> [Vec3; 3] {
        let mut cols = [Vec3::zeros(); 3];
        for (i, c) in cols.iter_mut().enumerate() {
            let mut e = Vec3::zeros();
            e[i] = h;
            *c = (g(&(p + e)) - g(&(p - e))) / (2.0 * h);
        }
        cols
    };
    let mut acc = 0.0;
    for j in 0..3 {
        let mut e = Vec3::zeros();
        e[j] = h;
        let (jp, jm) = (jac(&(y + e)), jac(&(y - e)));
        for i in 0..3 {
            acc += ((jp[i] - jm[i]) / (2.0 * h)).norm_squared();
        }
    }
    acc.sqrt()
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let s = synth_scan(&BenchmarkSpec {
        mesh_depth: 3,
        landmarks: 20,
        ..Default::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        arch: ArchConfig::small(32, 2),
        steps: 200,
        n_surface: 128,
        n_sphere: 32,
        ..Default::default()
    };
    let pair = train_single(&s.scan, &cfg).unwrap().pair;
    let code = pair.code(SCAN_CODE).unwrap();
    let g = |y: &Vec3| pair.decode_with_code(&[*y], &code).unwrap()[0];
    let h = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ys: Vec<Vec3> = (0..100).map(|_| random_unit(&mut rng)).collect();
    let hs = decoder_hessians(&pair, &ys, SCAN_CODE, h).unwrap();
    let mut worst: f64 = 0.0;
    let mut smallest = f64::INFINITY;
    for (y, hy) in ys.iter().zip(&hs) {
        let ours = frobenius_sq(hy).sqrt();
        let oracle = nested_fd_frobenius(&g, y, h);
        smallest = smallest.min(oracle);
        worst = worst.max((ours - oracle).abs() / oracle);
    }

    // affine maps: the identity decoder and a random affine map
    let mut id = EmbeddingPair::zeros(&ArchConfig::small(16, 2)).unwrap();
    id.add_code(SCAN_CODE, Vec3::new(0.3, -0.2, 0.9));
    let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-2.0..2.0));
    let b = Vec3::new(0.5, -1.0, 2.0);
    let affine = |y: &Vec3| -> sphembed::Result<Vec3> {
        let v = &a * DVector::from_column_slice(y.as_slice());
        Ok(Vec3::new(v[0], v[1], v[2]) + b)
    };
    let h_affine = 1e-3;
    let mut affine_max: f64 = 0.0;
    for y in &ys {
        affine_max = affine_max.max(frobenius_sq(&hessian_input(affine, y, h_affine).unwrap()).sqrt());
    }
    for hy in decoder_hessians(&id, &ys, SCAN_CODE, h_affine).unwrap() {
        affine_max = affine_max.max(frobenius_sq(&hy).sqrt());
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst < 1e-3 && affine_max < 1e-8 && secs < 30.0,
        format!(
            "trained decoder, 100 sphere points: worst relative gap {worst:.1e} (< 1e-3, smallest norm {smallest:.2}); \
             affine maps {affine_max:.1e} (< 1e-8); {secs:.1} s (< 30 s)"
        ),
    )
}

// 3-6. embedding, registration and triangulation

fn embed_config(kind: NetKind) -> TrainConfig {
    TrainConfig {
        arch: ArchConfig::small(64, 3).with_kind(kind),
        steps: 2000,
        n_surface: 256,
        n_sphere: 64,
        lr: 1e-4,
        ..Default::default()
    }
}

fn bbox_rel(mean: f64, mesh: &TriMesh) -> f64 {
    mean / mesh.bbox_diagonal()
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let s = synth_scan(&BenchmarkSpec::default()).unwrap();
    let tpl = &s.template;
    let r = train_joint(tpl, tpl, &s.landmarks_template, &s.landmarks_template, &embed_config(NetKind::Siren)).unwrap();
    let reg = register(&r.pair, tpl, tpl).unwrap();
    let disp = oracle_errors(&reg, &tpl.vertices).unwrap();
    let mean = disp.iter().sum::<f64>() / disp.len() as f64;
    let rel = bbox_rel(mean, tpl);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        rel < 0.01 && secs < 600.0,
        format!(
            "3x64 Siren, 2000 steps: mean code-swapped displacement {:.4}% of bbox diagonal (< 1%); {secs:.0} s (< 600 s)",
            100.0 * rel
        ),
    )
}

struct Bench {
    scan: SyntheticScan,
    pair: EmbeddingPair,
    seconds: f64,
}

fn bench() -> &'static Bench {
    static BENCH: OnceLock<Bench> = OnceLock::new();
    BENCH.get_or_init(|| {
        let t = Instant::now();
        let scan = synth_scan(&BenchmarkSpec::default()).unwrap();
        let r = train_joint(
            &scan.template,
            &scan.scan,
            &scan.landmarks_template,
            &scan.landmarks_scan,
            &embed_config(NetKind::Siren),
        )
        .unwrap();
        Bench {
            scan,
            pair: r.pair,
            seconds: t.elapsed().as_secs_f64(),
        }
    })
}

fn registration_error(pair: &EmbeddingPair, s: &SyntheticScan) -> (f64, f64) {
    let reg = register(pair, &s.template, &s.scan).unwrap();
    let m = eval_registration(&reg, &s.scan, None).unwrap();
    let oe = oracle_errors(&reg, &s.oracle(&s.template.vertices)).unwrap();
    (m.mean_rel_bbox, bbox_rel(oe.iter().sum::<f64>() / oe.len() as f64, &s.scan))
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let b = bench();
    let s = &b.scan;
    let (siren, siren_oracle) = registration_error(&b.pair, s);
    let relu = train_joint(
        &s.template,
        &s.scan,
        &s.landmarks_template,
        &s.landmarks_scan,
        &embed_config(NetKind::ReluMlp),
    )
    .unwrap();
    let (mlp, mlp_oracle) = registration_error(&relu.pair, s);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        siren < 0.005 && siren < 0.2 * mlp && secs < 1200.0,
        format!(
            "{} landmarks: vertex-to-scan {:.4}% of bbox (< 0.5%), plain MLP {:.4}%, ratio {:.3} (< 0.2); \
             correspondence error {:.4}% vs {:.4}%; {secs:.0} s (< 1200 s, Siren training {:.0} s)",
            s.landmarks_scan.len(),
            100.0 * siren,
            100.0 * mlp,
            siren / mlp,
            100.0 * siren_oracle,
            100.0 * mlp_oracle,
            b.seconds
        ),
    )
}

fn criterion_5() -> Outcome {
    let b = bench();
    let t = Instant::now();
    let s = &b.scan;
    let hi = retessellate(&s.template, 1).unwrap();
    let n = s.template.vertices.len();
    assert_eq!(&hi.vertices[..n], &s.template.vertices[..]);
    let lo = register(&b.pair, &s.template, &s.scan).unwrap();
    let fine = register_retessellated(&b.pair, &hi, &s.scan).unwrap();
    let differing = lo
        .registered
        .vertices
        .iter()
        .zip(&fine.registered.vertices)
        .filter(|(x, y)| (0..3).any(|k| x[k].to_bits() != y[k].to_bits()))
        .count();
    outcome(
        differing == 0,
        format!(
            "{n} shared vertices of a {}-vertex retessellation, {differing} differ bitwise (0); {:.1} s",
            hi.vertices.len(),
            t.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_6() -> Outcome {
    let b = bench();
    let t = Instant::now();
    let s = &b.scan;
    let tri = triangulate(&s.cameras, &s.lmks2d, &LmOptions::default()).unwrap();
    let mut worst: f64 = 0.0;
    let mut unresolved = 0;
    for (i, (p, truth)) in tri.iter().zip(&s.landmarks_scan).enumerate() {
        let views = (0..s.cameras.len()).filter(|&v| s.lmks2d.visible[v][i]).count();
        match p.position {
            Some(x) => worst = worst.max((x - truth).norm()),
            None if views >= 2 => unresolved += 1,
            None => {}
        }
    }
    let p0: Vec<Vec3> = s.landmarks_scan.iter().map(|p| p * 0.95).collect();
    let refined = refine_on_surface(&b.pair, SCAN_CODE, &s.cameras, &s.lmks2d, &p0, &RefineOptions::default()).unwrap();
    let loc = SurfaceLocator::new(&s.scan).unwrap();
    let dist = |pts: &[Vec3]| pts.iter().map(|p| loc.closest(p).unwrap().distance).sum::<f64>() / pts.len() as f64;
    let (before, after) = (dist(&p0), dist(&refined.points));
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst < 1e-6 && unresolved == 0 && before >= 10.0 * after && secs < 60.0,
        format!(
            "{}-view noiseless triangulation max error {worst:.1e} (< 1e-6), {unresolved} unresolved; \
             5% inward landmarks: mean surface distance {before:.4} -> {after:.6}, {:.0}x (>= 10x); {secs:.1} s (< 60 s)",
            s.cameras.len(),
            before / after
        ),
    )
}

// 7-8. strand codec

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let b = LegendreBasis::default();
    let gram = [6usize, 12, 40]
        .iter()
        .map(|&o| (b.gram(o) - DMatrix::identity(b.len(), b.len())).abs().max())
        .fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut trip: f64 = 0.0;
    for _ in 0..1000 {
        let degree = rng.random_range(0..=5);
        let mut c = StrandCoeffs::zeros(&b);
        for n in 0..=degree {
            c.coeffs[n] = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        let strand = decode_strand(&c, 100, &b).unwrap();
        let back = encode_strand(&strand, &b).unwrap();
        let again = decode_strand(&back, 100, &b).unwrap();
        trip = trip.max(back.distance(&c));
        for (x, y) in strand.points.iter().zip(&again.points) {
            trip = trip.max((x - y).norm());
        }
    }
    // least squares on the segment velocities through the normal equations
    let k = 100;
    let design = b.design(&uniform_params(k - 1));
    let normal = design.transpose() * &design;
    let mut brute: f64 = 0.0;
    for _ in 0..1000 {
        let mut p = Vec3::zeros();
        let pts: Vec<Vec3> = (0..k)
            .map(|_| {
                p += Vec3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), rng.random_range(0.0..0.03));
                p
            })
            .collect();
        let c = encode_points(&pts, &b).unwrap();
        for axis in 0..3 {
            let v = DVector::from_iterator(k - 1, pts.windows(2).map(|w| (w[1][axis] - w[0][axis]) * (k - 1) as f64 / 2.0));
            let x = normal.clone().lu().solve(&(design.transpose() * v)).unwrap();
            for n in 0..b.len() {
                brute = brute.max((x[n] - c.coeffs[n][axis]).abs());
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        gram < 1e-10 && trip < 1e-9 && brute < 1e-8 && secs < 10.0,
        format!(
            "Gram deviation {gram:.1e} (< 1e-10); degree<=5 round trip {trip:.1e} (< 1e-9); \
             normal equations on 1000 strands {brute:.1e} (< 1e-8); {secs:.1} s (< 10 s)"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 1_000_000;
    let mut inside = 0;
    let mut smallest = f64::INFINITY;
    for i in 0..n {
        let scale = [1e-12, 1.0, 1e6][i % 3];
        let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale;
        let raw = if i % 10 == 0 { rng.random_range(-800.0..-30.0) } else { rng.random_range(-30.0..60.0) };
        let r = match SphereCoord::from_unconstrained(&d, raw) {
            Ok(c) => c.decode().norm(),
            Err(_) => continue,
        };
        smallest = smallest.min(r);
        if !(r >= 1.0) {
            inside += 1;
        }
    }
    outcome(inside == 0, format!("{n} decoded points, {inside} with norm < 1, smallest norm {smallest}"))
}

// 9-11. generative models

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for k in 0..5 {
        let m = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = (0..16).map(|_| rng.random_range(-1.5..0.5)).collect();
        let l = VadLatent::new(m, s).unwrap();
        let mc = kl_monte_carlo(&l, 100_000, 90 + k).unwrap();
        worst = worst.max((mc - l.kl_divergence()).abs() / l.kl_divergence());
    }
    let l = VadLatent::new(vec![0.25, -1.5, 3.0], vec![0.3, -0.7, 1.1]).unwrap();
    let eta_zero = l.reparameterize(&[0.0; 3]).unwrap() == l.mean;
    let collapsed = VadLatent::new(l.mean.clone(), vec![-1000.0; 3]).unwrap();
    let sigma_zero = (0..100).all(|_| collapsed.reparameterize(&standard_noise(3, &mut rng)).unwrap() == l.mean);
    outcome(
        worst < 0.02 && eta_zero && sigma_zero,
        format!(
            "KL closed form vs 1e5-sample Monte Carlo, 5 latents: worst relative gap {:.3}% (< 2%); \
             eta=0 exact {eta_zero}; sigma=0 exact {sigma_zero}",
            100.0 * worst
        ),
    )
}

fn criterion_10() -> Outcome {
    let t = Instant::now();
    let res = 64;
    let chart = ScalpChart::upper_hemisphere(4).unwrap();
    let basis = LegendreBasis::default();
    let opts = BakeOptions {
        width: res,
        height: res,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let maps: Vec<ScalpMap> = (0..8)
        .map(|_| {
            let style = HairStyle::random(&mut rng);
            let strands = synthetic_hairstyle(&chart, &style, res, 100).unwrap();
            bake_scalp_map(&strands, &chart, &basis, &opts).unwrap().0
        })
        .collect();
    let cfg = VadTrainConfig {
        epochs: 60,
        batch_size: 4,
        ..Default::default()
    };
    let trained = train_vad(&maps, DecoderSpec::default(), &cfg).unwrap();
    let train_secs = t.elapsed().as_secs_f64();
    let mut worst_rel: f64 = 0.0;
    let mut worst_evals = 0;
    let mut fit_secs: f64 = 0.0;
    let mut start_rel = f64::INFINITY;
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let z = standard_noise(trained.decoder.latent_dim(), &mut rng);
        let strands = trained.decoder.decode_hair(&z).unwrap().strands(100).unwrap();
        let step = (strands.len() / MAX_GUIDES).max(1);
        let guides: Vec<Strand> = strands.into_iter().step_by(step).take(MAX_GUIDES).collect();
        let fit = fit_latent(&trained.decoder, &chart, &guides, &LatentFitConfig::default()).unwrap();
        // a huge prior pins the latent at zero: the error before fitting
        let pinned = LatentFitConfig {
            lambda: 1e12,
            ..Default::default()
        };
        start_rel = start_rel.min(fit_latent(&trained.decoder, &chart, &guides, &pinned).unwrap().relative_rms);
        worst_rel = worst_rel.max(fit.relative_rms);
        worst_evals = worst_evals.max(fit.evaluations);
        fit_secs = fit_secs.max(fit.seconds);
    }
    outcome(
        worst_rel < 0.05 && worst_evals <= 2000 && fit_secs < 120.0,
        format!(
            "3 known latents, {MAX_GUIDES} guides each: worst relative strand RMS {:.2}% (< 5%, at least {:.0}% at the zero latent), \
             at most {worst_evals} passes (<= 2000), slowest fit {fit_secs:.1} s (< 120 s); decoder training {train_secs:.0} s",
            100.0 * worst_rel,
            100.0 * start_rel
        ),
    )
}

fn criterion_11() -> Outcome {
    let t = Instant::now();
    let r = compare_linear_nonlinear(&FamilySpec::default(), &[1, 2, 4, 8], &AutoDecoderConfig::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let rows: Vec<String> = r
        .rows
        .iter()
        .map(|row| format!("d={} pca {:.4} nonlinear {:.4}", row.dims, row.pca_error, row.nonlinear_error))
        .collect();
    outcome(
        r.pca_monotone() && r.nonlinear_wins() && secs < 900.0,
        format!(
            "held-out error {}; PCA monotone {}, nonlinear lower at every size {}; {secs:.0} s (< 900 s)",
            rows.join(", "),
            r.pca_monotone(),
            r.nonlinear_wins()
        ),
    )
}

// 12. head-model fitting

fn embed_head_scan(scan: &TriMesh) -> EmbeddingPair {
    train_single(scan, &embed_config(NetKind::Siren)).unwrap().pair
}

fn criterion_12() -> Outcome {
    let t = Instant::now();
    let rotation = RotationParam::SixD;

    // model-generated scan with exact landmarks
    let clean = synthetic_head_scan(&HeadScanSpec {
        detail: 0.0,
        scan_noise: 0.0,
        landmark_noise: 0.0,
        ..Default::default()
    })
    .unwrap();
    let pair = embed_head_scan(&clean.scan);
    let init = HeadParams::neutral(&clean.template, rotation);
    let fit = fit_3d(
        &clean.template,
        &clean.scan,
        Some((&pair, SCAN_CODE)),
        &clean.landmarks,
        &init,
        &Fit3dConfig::default(),
    )
    .unwrap();
    let fitted = clean.template.pose_mesh(&fit.params).unwrap();
    let rms = (fitted
        .vertices
        .iter()
        .zip(&clean.posed.vertices)
        .map(|(a, b)| (a - b).norm_squared())
        .sum::<f64>()
        / fitted.vertices.len() as f64)
        .sqrt();
    let crime = rms / clean.scan.bbox_diagonal();

    // scan with detail beyond the model and noisy landmarks
    let real = synthetic_head_scan(&HeadScanSpec::default()).unwrap();
    let pair = embed_head_scan(&real.scan);
    let init = HeadParams::neutral(&real.template, rotation);
    let run = |term| {
        let cfg = Fit3dConfig {
            surface_term: term,
            ..Default::default()
        };
        fit_3d(&real.template, &real.scan, Some((&pair, SCAN_CODE)), &real.landmarks, &init, &cfg)
            .unwrap()
            .scan_to_mesh
            .mean
    };
    let implicit = run(SurfaceTerm::Implicit);
    let nearest = run(SurfaceTerm::NearestNeighbor);
    let diag = real.scan.bbox_diagonal();
    let secs = t.elapsed().as_secs_f64();
    outcome(
        crime < 0.01 && implicit < nearest && secs < 600.0,
        format!(
            "inverse crime vertex RMS {:.4}% of bbox (< 1%); scan-to-mesh implicit {:.4}% vs nearest-neighbor {:.4}% \
             (implicit must be lower, margin {:+.2}%); {secs:.0} s (< 600 s)",
            100.0 * crime,
            100.0 * implicit / diag,
            100.0 * nearest / diag,
            100.0 * (nearest - implicit) / nearest
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 12] = [
    (1, "differentiation", criterion_1),
    (2, "regularizer Hessian", criterion_2),
    (3, "self-registration", criterion_3),
    (4, "synthetic registration benchmark", criterion_4),
    (5, "tessellation invariance", criterion_5),
    (6, "triangulation and surface refinement", criterion_6),
    (7, "Legendre codec", criterion_7),
    (8, "intersection-free strands", criterion_8),
    (9, "variational latent identities", criterion_9),
    (10, "hair latent fitting", criterion_10),
    (11, "linear vs nonlinear models", criterion_11),
    (12, "3D head fitting", criterion_12),
];

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    // `cargo test -- --list` and filters are not meaningful here
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, f) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !pass {
            failed += 1;
        }
        println!("{} {id:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
