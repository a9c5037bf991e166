use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::hair::{bake_scalp_map, synthetic_hairstyle, BakeOptions, HairStyle, LegendreBasis, ScalpChart, ScalpMap};

fn tiny_spec() -> DecoderSpec {
    DecoderSpec {
        latent_dim: 3,
        initial_size: 2,
        initial_channels: 4,
        stage_channels: vec![3, 2],
        out_channels: 2,
    }
}

#[test]
fn reparameterize_identities() {
    let l = VadLatent::new(vec![0.5, -1.0], vec![0.0, 0.0]).unwrap();
    assert_eq!(l.reparameterize(&[0.0, 0.0]).unwrap(), l.mean);
    assert_eq!(l.reparameterize(&[0.3, 2.0]).unwrap(), vec![0.8, 1.0]);
    assert!(l.reparameterize(&[0.0]).is_err());
    assert!(VadLatent::new(vec![0.0], vec![]).is_err());
}

#[test]
fn kl_closed_form() {
    assert_eq!(VadLatent::zeros(16).kl_divergence(), 0.0);
    let mut l = VadLatent::zeros(16);
    l.mean[0] = 1.0;
    assert_eq!(l.kl_divergence(), 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let m = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        assert!(VadLatent::new(m, s).unwrap().kl_divergence() >= 0.0);
    }
}

#[test]
fn standard_draws_have_unit_moments() {
    let l = VadLatent::zeros(4);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100_000;
    let mut sum = [0.0; 4];
    let mut sq = [0.0; 4];
    for _ in 0..n {
        let z = l.reparameterize(&standard_noise(4, &mut rng)).unwrap();
        for i in 0..4 {
            sum[i] += z[i];
            sq[i] += z[i] * z[i];
        }
    }
    for i in 0..4 {
        let mean = sum[i] / n as f64;
        let std = (sq[i] / n as f64 - mean * mean).sqrt();
        assert!(mean.abs() < 0.02 && (0.98..=1.02).contains(&std), "{mean} {std}");
    }
}

#[test]
fn conv_decoder_gradients_match_finite_differences() {
    let dec = ConvDecoder::new(tiny_spec(), 4).unwrap();
    let z = [0.3, -0.7, 0.2];
    let (out, tape) = dec.forward_tape(&z).unwrap();
    assert_eq!(out.len(), 2 * 8 * 8);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w: Vec<f64> = (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |d: &ConvDecoder, z: &[f64]| -> f64 { d.forward(z).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum() };
    let mut g = vec![0.0; dec.param_count()];
    let dz = dec.backward(&tape, &w, Some(&mut g)).unwrap();
    let h = 1e-6;
    for i in 0..3 {
        let (mut zp, mut zm) = (z, z);
        zp[i] += h;
        zm[i] -= h;
        let fd = (loss(&dec, &zp) - loss(&dec, &zm)) / (2.0 * h);
        assert!((fd - dz[i]).abs() <= 1e-6 * fd.abs().max(1.0), "z{i}: {fd} vs {}", dz[i]);
    }
    for i in (0..dec.param_count()).step_by(7) {
        let mut p = dec.clone();
        p.params_mut()[i] += h;
        let mut m = dec.clone();
        m.params_mut()[i] -= h;
        let fd = (loss(&p, &z) - loss(&m, &z)) / (2.0 * h);
        assert!((fd - g[i]).abs() <= 1e-6 * fd.abs().max(1.0), "param {i}: {fd} vs {}", g[i]);
    }
}

#[test]
fn default_decoder_shapes() {
    let s = DecoderSpec::default();
    assert_eq!(s.output_size(), 64);
    assert_eq!(DecoderSpec::full_scale().output_size(), 256);
    let d = ConvDecoder::new(s.clone(), 0).unwrap();
    assert_eq!(d.forward(&[0.1; 16]).unwrap().len(), 18 * 64 * 64);
    assert!(d.forward(&[0.0; 3]).is_err());
}

#[test]
fn pca_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (n, d) = (12, 30);
    let data = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    let full = pca_fit(&data, n - 1).unwrap();
    assert!(full.orthonormality_error() < 1e-8);
    for i in 0..n {
        let x = data.row(i).transpose();
        assert!((full.project(&x).unwrap() - &x).abs().max() < 1e-8);
    }
    let mut last = f64::INFINITY;
    for k in 1..n {
        let p = pca_fit(&data, k).unwrap();
        let err: f64 = (0..n)
            .map(|i| {
                let x = data.row(i).transpose();
                (p.project(&x).unwrap() - x).norm_squared()
            })
            .sum();
        assert!(err <= last * (1.0 + 1e-12));
        last = err;
    }
    assert!(pca_fit(&data, n).is_err());
    // rank one
    let dir = DVector::from_fn(d, |i, _| (i as f64).sin());
    let r1 = DMatrix::from_fn(n, d, |i, j| 2.0 + (i as f64 - 3.0) * dir[j]);
    let p = pca_fit(&r1, 1).unwrap();
    for i in 0..n {
        let x = r1.row(i).transpose();
        assert!((p.project(&x).unwrap() - &x).abs().max() < 1e-8);
    }
}

fn small_dataset(styles: usize) -> (ScalpChart, Vec<ScalpMap>) {
    let chart = ScalpChart::upper_hemisphere(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let basis = LegendreBasis::default();
    let opts = BakeOptions {
        width: 8,
        height: 8,
        ..Default::default()
    };
    let maps = (0..styles)
        .map(|_| {
            let style = HairStyle::random(&mut rng);
            let strands = synthetic_hairstyle(&chart, &style, 8, 20).unwrap();
            bake_scalp_map(&strands, &chart, &basis, &opts).unwrap().0
        })
        .collect();
    (chart, maps)
}

fn small_spec() -> DecoderSpec {
    DecoderSpec {
        latent_dim: 4,
        initial_size: 2,
        initial_channels: 16,
        stage_channels: vec![16, 16],
        out_channels: 18,
    }
}

#[test]
fn vad_training_and_latent_fit() {
    let (chart, maps) = small_dataset(3);
    let cfg = VadTrainConfig {
        epochs: 300,
        kl_weight: 0.0,
        ..Default::default()
    };
    let res = train_vad(&maps, small_spec(), &cfg).unwrap();
    assert!(res.diverged_at.is_none());
    let first = res.history[0].recon;
    let last = res.history.last().unwrap().recon;
    assert!(last < 0.5 * first, "{first} -> {last}");
    let lat = &res.latents;
    for i in 0..lat.len() {
        for j in i + 1..lat.len() {
            let d: f64 = lat[i].mean.iter().zip(&lat[j].mean).map(|(a, b)| (a - b).powi(2)).sum();
            assert!(d > 0.0);
        }
    }
    let with_kl = train_vad(
        &maps,
        small_spec(),
        &VadTrainConfig {
            kl_weight: 1.0,
            ..cfg.clone()
        },
    )
    .unwrap();
    let r0 = reconstruction_rmse(&res.decoder, &res.latents, &maps).unwrap();
    let r1 = reconstruction_rmse(&with_kl.decoder, &with_kl.latents, &maps).unwrap();
    assert!(r0 < r1, "{r0} vs {r1}");

    // decoding is deterministic and round-trips through a file
    let z = vec![0.1, -0.2, 0.3, 0.0];
    let a = res.decoder.decode_hair(&z).unwrap();
    assert_eq!(a, res.decoder.decode_hair(&z).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dec.bin");
    res.decoder.save(&path).unwrap();
    assert_eq!(HairDecoder::load(&path).unwrap(), res.decoder);
    let s1 = res.decoder.sample_hair(3, &chart, Some(16), 20).unwrap();
    let s2 = res.decoder.sample_hair(3, &chart, Some(16), 20).unwrap();
    assert_eq!(s1, s2);

    // a huge prior pins the latent at zero
    let guides = a.strands(20).unwrap().into_iter().step_by(5).take(10).collect::<Vec<_>>();
    let fit = fit_latent(
        &res.decoder,
        &chart,
        &guides,
        &LatentFitConfig {
            lambda: 1e12,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(fit.latent.iter().all(|v| v.abs() < 1e-6));
    assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn untrained_or_mismatched_decoders_are_rejected() {
    let (_, maps) = small_dataset(1);
    let dec = HairDecoder::new(small_spec(), maps[0].clone(), 0).unwrap();
    assert!(dec.decode_hair(&[0.0; 4]).is_err());
    let wrong = DecoderSpec {
        stage_channels: vec![16],
        ..small_spec()
    };
    assert!(HairDecoder::new(wrong, maps[0].clone(), 0).is_err());
    assert!(train_vad(&maps, small_spec(), &VadTrainConfig::default()).is_err());
}

#[test]
fn linear_family_is_captured_by_pca() {
    let fam = mesh_family(&FamilySpec {
        kind: FamilyKind::Linear,
        train: 20,
        test: 5,
        mesh_depth: 1,
        ..Default::default()
    })
    .unwrap();
    let rows: Vec<Vec<f64>> = fam.train.iter().map(|m| m.vertices.iter().flat_map(|v| [v.x, v.y, v.z]).collect()).collect();
    let data = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    let p = pca_fit(&data, 2).unwrap();
    for m in &fam.test {
        let x = DVector::from_iterator(rows[0].len(), m.vertices.iter().flat_map(|v| [v.x, v.y, v.z]));
        assert!((p.project(&x).unwrap() - &x).abs().max() < 1e-10);
    }
}
