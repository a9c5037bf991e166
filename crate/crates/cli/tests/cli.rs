use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sphembed"));
    c.env_remove("SPHEMBED_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("metrics JSON on stdout")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_SCAN: &str = r#"{"benchmark": {"mesh_depth": 2, "landmarks": 30, "cameras": 6}}"#;

#[test]
fn synth_scan_is_reproducible_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scan.json", SMALL_SCAN);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let m = ok(&["synth-scan", "--config", s(&cfg), "--seed", "3", "--out", s(&a)]);
    ok(&["synth-scan", "--config", s(&cfg), "--seed", "3", "--out", s(&b)]);
    assert_eq!(m["landmarks"], 30);
    assert_eq!(m["faces"], 320);
    for f in [
        "scan.obj",
        "template.obj",
        "landmarks_template.csv",
        "landmarks_scan.csv",
        "cameras.json",
        "lmks2d.csv",
        "field.json",
        "manifest.json",
    ] {
        assert!(a.join(f).exists(), "{f} missing");
    }
    assert_eq!(
        std::fs::read(a.join("metrics.json")).unwrap(),
        std::fs::read(b.join("metrics.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(a.join("scan.obj")).unwrap(),
        std::fs::read(b.join("scan.obj")).unwrap()
    );
    let manifest: Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "synth-scan");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config"]["benchmark"]["mesh_depth"], 2);
}

#[test]
fn missing_config_key_exits_two_with_key_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"benchmark": {"bands": [{"l": 2}]}}"#);
    let out = run(&["synth-scan", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "usage");
    assert_eq!(err["error"]["key_path"], "benchmark.bands[0]");
    assert!(err["error"]["message"].as_str().unwrap().contains("amplitude"));

    let cfg = write_config(dir.path(), "empty.json", "{}");
    let out = run(&["synth-scan", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"]["message"].as_str().unwrap().contains("benchmark"));

    // unknown subcommand is a usage error too
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_one_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.obj");
    let out = run(&["register", s(&missing), s(&missing), s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "io");
}

#[test]
fn embed_register_and_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let scan_cfg = write_config(
        dir.path(),
        "scan.json",
        r#"{"benchmark": {"mesh_depth": 2, "landmarks": 30, "cameras": 16}}"#,
    );
    let data = dir.path().join("data");
    ok(&["synth-scan", "--config", s(&scan_cfg), "--out", s(&data)]);
    let before = std::fs::read(data.join("scan.obj")).unwrap();

    let train_cfg = write_config(
        dir.path(),
        "train.json",
        r#"{"train": {"arch": {"kind": {"kind": "siren"}, "hidden_width": 16, "depth": 2, "modulator_width": 16,
            "modulator_depth": 2}, "steps": 150, "n_surface": 64, "n_sphere": 16}}"#,
    );
    let emb = dir.path().join("emb");
    let m = ok(&[
        "train-embed",
        s(&data.join("template.obj")),
        s(&data.join("scan.obj")),
        "--template-landmarks",
        s(&data.join("landmarks_template.csv")),
        "--scan-landmarks",
        s(&data.join("landmarks_scan.csv")),
        "--config",
        s(&train_cfg),
        "--out",
        s(&emb),
    ]);
    assert_eq!(m["steps"], 150);
    assert!(emb.join("pair.bin").exists() && emb.join("curve.csv").exists());

    let reg = dir.path().join("reg");
    let r = ok(&[
        "register",
        s(&emb.join("pair.bin")),
        s(&data.join("template.obj")),
        s(&data.join("scan.obj")),
        "--out",
        s(&reg),
    ]);
    // the CLI reports exactly what the library computes on the same files
    let pair = sphembed::embed::EmbeddingPair::load(emb.join("pair.bin")).unwrap();
    let t = sphembed::geometry::load_mesh(data.join("template.obj")).unwrap();
    let sc = sphembed::geometry::load_mesh(data.join("scan.obj")).unwrap();
    let lib = sphembed::registration::register(&pair, &t, &sc).unwrap();
    let lm = sphembed::registration::eval_registration(&lib, &sc, None).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    assert!(rel(r["mean"].as_f64().unwrap(), lm.mean) < 1e-8);
    assert!(rel(r["max"].as_f64().unwrap(), lm.max) < 1e-8);
    assert!(reg.join("error_map.ply").exists());

    let ev = dir.path().join("ev");
    let e = ok(&[
        "eval",
        s(&reg.join("registered.obj")),
        "--against",
        "oracle",
        "--template",
        s(&data.join("template.obj")),
        "--field",
        s(&data.join("field.json")),
        "--out",
        s(&ev),
    ]);
    let syn = sphembed::synth::synth_scan(&sphembed::synth::BenchmarkSpec {
        mesh_depth: 2,
        landmarks: 30,
        cameras: 16,
        ..Default::default()
    })
    .unwrap();
    let oe = sphembed::registration::oracle_errors(&lib, &syn.oracle(&t.vertices)).unwrap();
    let om = oe.iter().sum::<f64>() / oe.len() as f64;
    // the OBJ round trip of the registered mesh limits agreement
    assert!((e["mean"].as_f64().unwrap() - om).abs() < 1e-5, "{} vs {om}", e["mean"]);

    let tri = dir.path().join("tri");
    let tm = ok(&[
        "triangulate",
        s(&data.join("cameras.json")),
        s(&data.join("lmks2d.csv")),
        "--out",
        s(&tri),
    ]);
    assert_eq!(tm["triangulated"], 30);
    assert!(tm["max_rms_px"].as_f64().unwrap() < 1e-6);
    let rf = dir.path().join("rf");
    let rm = ok(&[
        "refine-landmarks",
        s(&emb.join("pair.bin")),
        s(&data.join("cameras.json")),
        s(&data.join("lmks2d.csv")),
        s(&tri.join("landmarks.csv")),
        "--out",
        s(&rf),
    ]);
    assert!(rm["final_cost"].as_f64().unwrap() <= rm["initial_cost"].as_f64().unwrap());

    let rep = dir.path().join("rep");
    let report = ok(&["report", s(&data), s(&reg), s(&ev), "--out", s(&rep)]);
    assert_eq!(report["runs"], 3);
    assert_eq!(report["entries"][1]["command"], "register");

    // inputs are never modified
    assert_eq!(std::fs::read(data.join("scan.obj")).unwrap(), before);
}

#[test]
fn hair_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let synth_cfg = write_config(
        dir.path(),
        "synth.json",
        r#"{"chart_depth": 3, "resolution": 8, "points": 16, "styles": 2}"#,
    );
    let styles = dir.path().join("styles");
    let m = ok(&["hair", "synth", "--config", s(&synth_cfg), "--out", s(&styles)]);
    assert_eq!(m["styles"], 2);
    let bake_cfg = write_config(
        dir.path(),
        "bake.json",
        r#"{"chart_depth": 3, "degree": 5, "bake": {"width": 8, "height": 8, "max_root_distance": 0.001}}"#,
    );
    let mut maps = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("bake{i}"));
        let b = ok(&[
            "hair",
            "bake",
            s(&styles.join(format!("style_{i:03}.bin"))),
            "--config",
            s(&bake_cfg),
            "--out",
            s(&out),
        ]);
        assert_eq!(b["collisions"], 0);
        assert_eq!(b["off_chart"], 0);
        maps.push(out.join("scalp_map.bin"));
    }
    let sample_cfg = write_config(dir.path(), "sample.json", r#"{"chart_depth": 3, "resolution": 8, "points": 16}"#);
    let smp = dir.path().join("smp");
    let sm = ok(&["hair", "sample", s(&maps[0]), "--config", s(&sample_cfg), "--out", s(&smp)]);
    assert!(sm["strands"].as_u64().unwrap() > 0);

    // world strands cannot be encoded directly; decoded TBN strands can
    let codec = write_config(dir.path(), "codec.json", r#"{"degree": 5, "points": 16}"#);
    let out = run(&["hair", "encode", s(&styles.join("style_000.bin")), "--config", s(&codec), "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(1));

    let vad_cfg = write_config(
        dir.path(),
        "vad.json",
        r#"{"decoder": {"latent_dim": 4, "initial_size": 2, "initial_channels": 8, "stage_channels": [8, 8], "out_channels": 18},
            "train": {"epochs": 5, "batch_size": 2}}"#,
    );
    let vad = dir.path().join("vad");
    let v = ok(&["vad", "train", s(&maps[0]), s(&maps[1]), "--config", s(&vad_cfg), "--out", s(&vad)]);
    assert_eq!(v["epochs"], 5);
    let vs = dir.path().join("vs");
    ok(&["vad", "sample", s(&vad.join("decoder.bin")), "--config", s(&sample_cfg), "--seed", "4", "--out", s(&vs)]);
    let strands = sphembed::hair::load_strands(vs.join("strands.bin")).unwrap();
    assert!(!strands.is_empty());
    let guides: Vec<_> = strands.into_iter().step_by(7).take(10).collect();
    sphembed::hair::save_strands(&guides, dir.path().join("guides.bin")).unwrap();
    let fit_cfg = write_config(dir.path(), "fit.json", r#"{"chart_depth": 3, "fit": {"max_evals": 50}}"#);
    let f = ok(&[
        "hair",
        "fit",
        s(&vad.join("decoder.bin")),
        s(&dir.path().join("guides.bin")),
        "--config",
        s(&fit_cfg),
        "--out",
        s(&dir.path().join("hf")),
    ]);
    assert!(f["evaluations"].as_u64().unwrap() <= 50);

    let basis = sphembed::hair::LegendreBasis::new(5);
    let mut c0 = sphembed::hair::StrandCoeffs::zeros(&basis);
    c0.coeffs[0] = sphembed::geometry::Vec3::new(0.0, 0.0, 0.05);
    c0.coeffs[1] = sphembed::geometry::Vec3::new(0.01, 0.0, 0.05);
    let coeffs = vec![c0];
    std::fs::write(dir.path().join("c.json"), serde_json::to_string(&coeffs).unwrap()).unwrap();
    let dec = dir.path().join("dec");
    ok(&["hair", "decode", s(&dir.path().join("c.json")), "--config", s(&codec), "--out", s(&dec)]);
    let enc = dir.path().join("enc");
    let e = ok(&["hair", "encode", s(&dec.join("strands.bin")), "--config", s(&codec), "--out", s(&enc)]);
    assert_eq!(e["strands"], 1);
}

#[test]
fn head_fitting_commands() {
    let dir = tempfile::tempdir().unwrap();
    let head_cfg = write_config(
        dir.path(),
        "head.json",
        r#"{"head": {"detail": 0.0, "landmark_noise": 0.0, "subdivisions": 0}, "cameras": 4, "camera_distance": 4.0, "focal": 800.0}"#,
    );
    let data = dir.path().join("head");
    ok(&["synth-head", "--config", s(&head_cfg), "--out", s(&data)]);
    let fit_cfg = write_config(
        dir.path(),
        "fit3d.json",
        r#"{"fit": {"surface_term": "nearest_neighbor", "eval_samples": 2000}, "rotation": "six_d", "code": "scan"}"#,
    );
    let m = ok(&[
        "fit3d",
        s(&data.join("template.bin")),
        s(&data.join("scan.obj")),
        s(&data.join("landmarks.csv")),
        "--config",
        s(&fit_cfg),
        "--out",
        s(&dir.path().join("f3")),
    ]);
    assert!(m["objective"].as_f64().unwrap() * 100.0 < m["initial_objective"].as_f64().unwrap());
    assert!(m["scan_to_mesh_mean_rel_bbox"].as_f64().unwrap() < 0.01);

    // the implicit term needs an embedding
    let out = run(&[
        "fit3d",
        s(&data.join("template.bin")),
        s(&data.join("scan.obj")),
        s(&data.join("landmarks.csv")),
        "--out",
        s(&dir.path().join("f3b")),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let m2 = ok(&[
        "fit2d",
        s(&data.join("template.bin")),
        s(&data.join("cameras.json")),
        s(&data.join("lmks2d.csv")),
        "--out",
        s(&dir.path().join("f2")),
    ]);
    assert!(m2["reprojection_rms_px"].as_f64().unwrap() < 0.1);
    assert_eq!(m2["depth_ambiguous"], false);

    let ev = ok(&[
        "eval",
        s(&dir.path().join("f2").join("fitted.obj")),
        "--against",
        "scan",
        "--scan",
        s(&data.join("scan.obj")),
        "--out",
        s(&dir.path().join("ev")),
    ]);
    assert!(ev["mean_rel_bbox"].as_f64().unwrap() < 0.01);
}
