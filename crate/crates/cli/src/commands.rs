use std::path::{Path, PathBuf};

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sphembed::embed::{train_joint, EmbeddingPair};
use sphembed::generative::{fit_latent, reconstruction_rmse, train_vad, HairDecoder};
use sphembed::geometry::{load_mesh, save_mesh, TriMesh, Vec3};
use sphembed::hair::{
    bake_scalp_map, decode_strand, encode_strand, load_strands, sample_scalp_map, save_strands, synthetic_hairstyle,
    FrameTag, HairStyle, LegendreBasis, ScalpChart, ScalpMap, StrandCoeffs,
};
use sphembed::headfit::{
    fit_2d, fit_3d, scan_to_mesh_error, synthetic_head_scan, HeadParams, RiggedTemplate, SurfaceTerm,
};
use sphembed::registration::{error_stats, errors_csv, eval_registration, register};
use sphembed::synth::{orbit_cameras, synth_scan, BumpField};
use sphembed::triangulation::{cameras_from_json, cameras_to_json, refine_on_surface, triangulate, Landmarks2D};
use sphembed::Error;

use crate::config::{self, *};
use crate::error::{CliError, CliResult};
use crate::output::{points_csv, read_json, read_points_csv, read_text, InputRecord, Manifest, RunDir};
use crate::{Cli, Command, EvalArgs, EvalTarget, HairCommand, VadCommand};

/// What a command produced, before the manifest is written.
struct Run {
    metrics: Value,
    inputs: Vec<PathBuf>,
    config: Value,
    seed: Option<u64>,
    outputs: Vec<PathBuf>,
}

fn to_value<T: Serialize>(v: &T) -> CliResult<Value> {
    Ok(serde_json::to_value(v).map_err(Error::from)?)
}

/// Runs the selected command and returns the metrics text written to disk.
pub fn run(cli: &Cli) -> CliResult<String> {
    if cli.threads == 0 {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    let cfg_path = cli.config.as_deref();
    let dir = RunDir::create(&cli.out)?;
    let (name, run) = match &cli.command {
        Command::SynthScan => ("synth-scan", synth_scan_cmd(&dir, cfg_path, cli.seed)?),
        Command::TrainEmbed(a) => (
            "train-embed",
            train_embed(&dir, cfg_path, cli.seed, &a.template, &a.scan, &a.template_landmarks, &a.scan_landmarks)?,
        ),
        Command::Register(a) => ("register", register_cmd(&dir, &a.pair, &a.template, &a.scan)?),
        Command::Triangulate(a) => ("triangulate", triangulate_cmd(&dir, cfg_path, &a.cameras, &a.landmarks_2d)?),
        Command::RefineLandmarks(a) => (
            "refine-landmarks",
            refine_cmd(&dir, cfg_path, &a.pair, &a.cameras, &a.landmarks_2d, &a.landmarks)?,
        ),
        Command::Hair(h) => match h {
            HairCommand::Synth => ("hair synth", hair_synth(&dir, cfg_path, cli.seed)?),
            HairCommand::Encode { strands } => ("hair encode", hair_encode(&dir, cfg_path, strands)?),
            HairCommand::Decode { coeffs } => ("hair decode", hair_decode(&dir, cfg_path, coeffs)?),
            HairCommand::Bake { strands } => ("hair bake", hair_bake(&dir, cfg_path, strands)?),
            HairCommand::Sample { map } => ("hair sample", hair_sample(&dir, cfg_path, map)?),
            HairCommand::Fit { decoder, guides } => ("hair fit", hair_fit(&dir, cfg_path, decoder, guides)?),
        },
        Command::Vad(v) => match v {
            VadCommand::Train { maps } => ("vad train", vad_train(&dir, cfg_path, cli.seed, maps)?),
            VadCommand::Sample { decoder } => ("vad sample", vad_sample(&dir, cfg_path, cli.seed, decoder)?),
        },
        Command::SynthHead => ("synth-head", synth_head(&dir, cfg_path, cli.seed)?),
        Command::Fit3d(a) => (
            "fit3d",
            fit3d_cmd(&dir, cfg_path, cli.seed, &a.template, &a.scan, &a.landmarks, a.pair.as_deref())?,
        ),
        Command::Fit2d(a) => ("fit2d", fit2d_cmd(&dir, cfg_path, &a.template, &a.cameras, &a.landmarks_2d)?),
        Command::Eval(a) => ("eval", eval_cmd(&dir, cfg_path, a)?),
        Command::Report(a) => ("report", report_cmd(&dir, &a.runs)?),
    };
    let mut inputs = run.inputs.clone();
    if let Some(p) = cfg_path {
        inputs.push(p.to_path_buf());
    }
    let manifest = Manifest {
        command: name.to_string(),
        version: env!("CARGO_PKG_VERSION"),
        inputs: inputs.iter().map(|p| InputRecord::of(p)).collect::<CliResult<_>>()?,
        seed: run.seed,
        threads: cli.threads,
        config: run.config,
        outputs: run
            .outputs
            .iter()
            .map(|p| p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    dir.write_json("manifest.json", &manifest)?;
    dir.write_metrics(&run.metrics)
}

fn synth_scan_cmd(dir: &RunDir, cfg: Option<&Path>, seed: Option<u64>) -> CliResult<Run> {
    let mut c: SynthScanConfig = config::load(cfg)?;
    if let Some(s) = seed {
        c.benchmark.seed = s;
    }
    let s = synth_scan(&c.benchmark)?;
    let mut outputs = Vec::new();
    for (name, mesh) in [("scan.obj", &s.scan), ("template.obj", &s.template)] {
        let p = dir.path(name);
        save_mesh(mesh, &p)?;
        outputs.push(p);
    }
    outputs.push(dir.write_text("landmarks_template.csv", &points_csv(&s.landmarks_template)?)?);
    outputs.push(dir.write_text("landmarks_scan.csv", &points_csv(&s.landmarks_scan)?)?);
    outputs.push(dir.write_text("cameras.json", &cameras_to_json(&s.cameras)?)?);
    outputs.push(dir.write_text("lmks2d.csv", &s.lmks2d.to_csv())?);
    outputs.push(dir.write_json("field.json", &s.field)?);
    let visible: usize = s.lmks2d.visible.iter().map(|v| v.iter().filter(|b| **b).count()).sum();
    Ok(Run {
        metrics: json!({
            "vertices": s.scan.vertices.len(),
            "faces": s.scan.faces.len(),
            "landmarks": s.landmarks_scan.len(),
            "cameras": s.cameras.len(),
            "visible_observations": visible,
            "scan_bbox_diagonal": s.scan.bbox_diagonal(),
        }),
        inputs: vec![],
        config: to_value(&c)?,
        seed: Some(c.benchmark.seed),
        outputs,
    })
}

#[allow(clippy::too_many_arguments)]
fn train_embed(
    dir: &RunDir,
    cfg: Option<&Path>,
    seed: Option<u64>,
    template: &Path,
    scan: &Path,
    lt: &Path,
    ls: &Path,
) -> CliResult<Run> {
    let mut c: TrainEmbedConfig = config::load(cfg)?;
    if let Some(s) = seed {
        c.train.seed = s;
    }
    let t = load_mesh(template)?;
    let s = load_mesh(scan)?;
    let p_t = read_points_csv(lt)?;
    let p_s = read_points_csv(ls)?;
    let res = train_joint(&t, &s, &p_t, &p_s, &c.train)?;
    let pair_path = dir.path("pair.bin");
    res.pair.save(&pair_path)?;
    let curve = dir.write_text("curve.csv", &res.curve_csv())?;
    let last = res.history.last().copied();
    Ok(Run {
        metrics: json!({
            "steps": res.history.len(),
            "final": last,
            "diverged_at": res.diverged_at,
        }),
        inputs: vec![template.into(), scan.into(), lt.into(), ls.into()],
        config: to_value(&c)?,
        seed: Some(c.train.seed),
        outputs: vec![pair_path, curve],
    })
}

fn register_cmd(dir: &RunDir, pair: &Path, template: &Path, scan: &Path) -> CliResult<Run> {
    let p = EmbeddingPair::load(pair)?;
    let t = load_mesh(template)?;
    let s = load_mesh(scan)?;
    let res = register(&p, &t, &s)?;
    let map = dir.path("error_map.ply");
    let m = eval_registration(&res, &s, Some(&map))?;
    let reg = dir.path("registered.obj");
    save_mesh(&res.registered, &reg)?;
    let errs = dir.write_text("errors.csv", &errors_csv(&res.per_vertex_error))?;
    Ok(Run {
        metrics: to_value(&m)?,
        inputs: vec![pair.into(), template.into(), scan.into()],
        config: Value::Null,
        seed: None,
        outputs: vec![reg, map, errs],
    })
}

fn triangulate_cmd(dir: &RunDir, cfg: Option<&Path>, cams: &Path, l2d: &Path) -> CliResult<Run> {
    let c: TriangulateConfig = config::load(cfg)?;
    let cameras = cameras_from_json(&read_text(cams)?)?;
    let lmks = Landmarks2D::load_csv(l2d)?;
    let pts = triangulate(&cameras, &lmks, &c.solver)?;
    let positions: Vec<Vec3> = pts.iter().map(|p| p.position.unwrap_or(Vec3::repeat(f64::NAN))).collect();
    let solved: Vec<f64> = pts.iter().filter(|p| p.position.is_some()).map(|p| p.rms_px).collect();
    let (mean_rms, _, max_rms) = error_stats(&solved);
    let out = dir.write_text("landmarks.csv", &points_csv(&positions)?)?;
    Ok(Run {
        metrics: json!({
            "landmarks": pts.len(),
            "triangulated": solved.len(),
            "mean_rms_px": mean_rms,
            "max_rms_px": max_rms,
        }),
        inputs: vec![cams.into(), l2d.into()],
        config: to_value(&c)?,
        seed: None,
        outputs: vec![out],
    })
}

fn refine_cmd(dir: &RunDir, cfg: Option<&Path>, pair: &Path, cams: &Path, l2d: &Path, lm: &Path) -> CliResult<Run> {
    let c: RefineConfig = config::load(cfg)?;
    let p = EmbeddingPair::load(pair)?;
    let cameras = cameras_from_json(&read_text(cams)?)?;
    let lmks = Landmarks2D::load_csv(l2d)?;
    let p0 = read_points_csv(lm)?;
    if p0.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::Validation("initial landmarks contain untriangulated (NaN) rows".into()).into());
    }
    let res = refine_on_surface(&p, &c.code, &cameras, &lmks, &p0, &c.refine)?;
    let out = dir.write_text("refined.csv", &points_csv(&res.points)?)?;
    Ok(Run {
        metrics: json!({
            "landmarks": res.points.len(),
            "initial_cost": res.initial_cost.iter().sum::<f64>(),
            "final_cost": res.final_cost.iter().sum::<f64>(),
        }),
        inputs: vec![pair.into(), cams.into(), l2d.into(), lm.into()],
        config: to_value(&c)?,
        seed: None,
        outputs: vec![out],
    })
}

fn hair_synth(dir: &RunDir, cfg: Option<&Path>, seed: Option<u64>) -> CliResult<Run> {
    let c: HairSynthConfig = config::load(cfg)?;
    let seed = seed.unwrap_or(0);
    if c.styles == 0 {
        return Err(CliError::usage("styles must be at least 1"));
    }
    let chart = ScalpChart::upper_hemisphere(c.chart_depth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outputs = Vec::new();
    let mut counts = Vec::new();
    for i in 0..c.styles {
        let style = HairStyle::random(&mut rng);
        let strands = synthetic_hairstyle(&chart, &style, c.resolution, c.points)?;
        let p = dir.path(&format!("style_{i:03}.bin"));
        save_strands(&strands, &p)?;
        counts.push(strands.len());
        outputs.push(p);
    }
    Ok(Run {
        metrics: json!({ "styles": c.styles, "strands": counts }),
        inputs: vec![],
        config: to_value(&c)?,
        seed: Some(seed),
        outputs,
    })
}

fn hair_encode(dir: &RunDir, cfg: Option<&Path>, strands: &Path) -> CliResult<Run> {
    let c: CodecConfig = config::load(cfg)?;
    let basis = LegendreBasis::new(c.degree);
    let s = load_strands(strands)?;
    let coeffs = s.iter().map(|x| encode_strand(x, &basis)).collect::<Result<Vec<_>, _>>()?;
    let out = dir.write_json("coeffs.json", &coeffs)?;
    Ok(Run {
        metrics: json!({ "strands": coeffs.len(), "degree": c.degree }),
        inputs: vec![strands.into()],
        config: to_value(&c)?,
        seed: None,
        outputs: vec![out],
    })
}

fn hair_decode(dir: &RunDir, cfg: Option<&Path>, coeffs: &Path) -> CliResult<Run> {
    let c: CodecConfig = config::load(cfg)?;
    let basis = LegendreBasis::new(c.degree);
    let cs: Vec<StrandCoeffs> = read_json(coeffs)?;
    let strands = cs.iter().map(|x| decode_strand(x, c.points, &basis)).collect::<Result<Vec<_>, _>>()?;
    let out = dir.path("strands.bin");
    save_strands(&strands, &out)?;
    Ok(Run {
        metrics: json!({ "strands": strands.len(), "points": c.points }),
        inputs: vec![coeffs.into()],
        config: to_value(&c)?,
        seed: None,
        outputs: vec![out],
    })
}

fn hair_bake(dir: &RunDir, cfg: Option<&Path>, strands: &Path) -> CliResult<Run> {
    let c: BakeConfig = config::load(cfg)?;
    let chart = ScalpChart::upper_hemisphere(c.chart_depth)?;
    let s = load_strands(strands)?;
    if s.iter().any(|x| x.frame != FrameTag::World) {
        return Err(Error::Validation("baking needs world-frame strands".into()).into());
    }
    let (map, stats) = bake_scalp_map(&s, &chart, &LegendreBasis::new(c.degree), &c.bake)?;
    let out = dir.path("scalp_map.bin");
    map.save(&out)?;
    Ok(Run {
        metrics: json!({
            "input": stats.input,
            "baked": stats.baked,
            "collisions": stats.collisions,
            "off_chart": stats.off_chart,
            "collision_rate": stats.collision_rate(),
            "valid_texels": map.valid_count(),
        }),
        inputs: vec![strands.into()],
        config: to_value(&c)?,
        seed: None,
        outputs: vec![out],
    })
}

fn hair_sample(dir: &RunDir, cfg: Option<&Path>, map: &Path) -> CliResult<Run> {
    let c: SampleConfig = config::load(cfg)?;
    let chart = ScalpChart::upper_hemisphere(c.chart_depth)?;
    let m = ScalpMap::load(map)?;
    let (w, h) = c.resolution.map_or((m.width, m.height), |r| (r, r));
    let strands = sample_scalp_map(&m, &chart, w, h, c.points)?;
    let out = dir.path("strands.bin");
    save_strands(&strands, &out)?;
    Ok(Run {
        metrics: json!({ "strands": strands.len(), "width": w, "height": h }),
        inputs: vec![map.into()],
        config: to_value(&c)?,
        seed: None,
        outputs: vec![out],
    })
}

fn hair_fit(dir: &RunDir, cfg: Option<&Path>, decoder: &Path, guides: &Path) -> CliResult<Run> {
    let c: HairFitConfig = config::load(cfg)?;
    let chart = ScalpChart::upper_hemisphere(c.chart_depth)?;
    let d = HairDecoder::load(decoder)?;
    let g = load_strands(guides)?;
    let fit = fit_latent(&d, &chart, &g, &c.fit)?;
    info!("latent fit took {:.2} s", fit.seconds);
    let out = dir.write_json("latent.json", &fit.latent)?;
    Ok(Run {
        metrics: json!({
            "objective": fit.objective,
            "rms": fit.rms,
            "relative_rms": fit.relative_rms,
            "iterations": fit.iterations,
            "evaluations": fit.evaluations,
            "guides_used": fit.guides_used,
        }),
        inputs: vec![decoder.into(), guides.into()],
        config: to_value(&c)?,
        seed: None,
        outputs: vec![out],
    })
}

fn vad_train(dir: &RunDir, cfg: Option<&Path>, seed: Option<u64>, maps: &[PathBuf]) -> CliResult<Run> {
    let mut c: VadTrainFileConfig = config::load(cfg)?;
    if let Some(s) = seed {
        c.train.seed = s;
    }
    let data = maps.iter().map(ScalpMap::load).collect::<Result<Vec<_>, _>>()?;
    let res = train_vad(&data, c.decoder.clone(), &c.train)?;
    let out = dir.path("decoder.bin");
    res.decoder.save(&out)?;
    let curve = dir.write_text("curve.csv", &res.curve_csv())?;
    let lat = dir.write_text("latents.csv", &res.latents_csv())?;
    let rmse = reconstruction_rmse(&res.decoder, &res.latents, &data)?;
    let last = res.history.last();
    Ok(Run {
        metrics: json!({
            "epochs": res.history.len(),
            "final_recon": last.map(|r| r.recon),
            "final_kl": last.map(|r| r.kl),
            "reconstruction_rmse": rmse,
            "diverged_at": res.diverged_at,
        }),
        inputs: maps.to_vec(),
        config: to_value(&c)?,
        seed: Some(c.train.seed),
        outputs: vec![out, curve, lat],
    })
}

fn vad_sample(dir: &RunDir, cfg: Option<&Path>, seed: Option<u64>, decoder: &Path) -> CliResult<Run> {
    let c: SampleConfig = config::load(cfg)?;
    let seed = seed.unwrap_or(0);
    let chart = ScalpChart::upper_hemisphere(c.chart_depth)?;
    let d = HairDecoder::load(decoder)?;
    let strands = d.sample_hair(seed, &chart, c.resolution, c.points)?;
    let out = dir.path("strands.bin");
    save_strands(&strands, &out)?;
    Ok(Run {
        metrics: json!({ "strands": strands.len() }),
        inputs: vec![decoder.into()],
        config: to_value(&c)?,
        seed: Some(seed),
        outputs: vec![out],
    })
}

fn synth_head(dir: &RunDir, cfg: Option<&Path>, seed: Option<u64>) -> CliResult<Run> {
    let mut c: SynthHeadConfig = config::load(cfg)?;
    if let Some(s) = seed {
        c.head.seed = s;
    }
    let h = synthetic_head_scan(&c.head)?;
    let template = dir.path("template.bin");
    h.template.save(&template)?;
    let scan = dir.path("scan.obj");
    save_mesh(&h.scan, &scan)?;
    let truth_mesh = dir.path("truth.obj");
    save_mesh(&h.posed, &truth_mesh)?;
    let truth = dir.write_json("truth.json", &h.truth)?;
    let lm = dir.write_text("landmarks.csv", &points_csv(&h.landmarks)?)?;
    let cams = orbit_cameras(c.cameras, c.camera_distance, c.focal)?;
    let exact = h.template.landmark_positions(&h.posed.vertices);
    let l2d = Landmarks2D::from_points(&cams, &exact);
    let cam_path = dir.write_text("cameras.json", &cameras_to_json(&cams)?)?;
    let l2d_path = dir.write_text("lmks2d.csv", &l2d.to_csv())?;
    Ok(Run {
        metrics: json!({
            "template_vertices": h.template.rest.vertices.len(),
            "scan_vertices": h.scan.vertices.len(),
            "landmarks": h.landmarks.len(),
            "scan_bbox_diagonal": h.scan.bbox_diagonal(),
        }),
        inputs: vec![],
        config: to_value(&c)?,
        seed: Some(c.head.seed),
        outputs: vec![template, scan, truth_mesh, truth, lm, cam_path, l2d_path],
    })
}

fn write_fit(dir: &RunDir, template: &RiggedTemplate, params: &HeadParams) -> CliResult<Vec<PathBuf>> {
    let p = dir.write_json("params.json", params)?;
    let mesh = dir.path("fitted.obj");
    save_mesh(&template.pose_mesh(params)?, &mesh)?;
    Ok(vec![p, mesh])
}

#[allow(clippy::too_many_arguments)]
fn fit3d_cmd(
    dir: &RunDir,
    cfg: Option<&Path>,
    seed: Option<u64>,
    template: &Path,
    scan: &Path,
    landmarks: &Path,
    pair: Option<&Path>,
) -> CliResult<Run> {
    let mut c: Fit3dFileConfig = config::load(cfg)?;
    if let Some(s) = seed {
        c.fit.seed = s;
    }
    if c.fit.surface_term == SurfaceTerm::Implicit && pair.is_none() {
        return Err(CliError::usage("the implicit surface term needs --pair"));
    }
    let t = RiggedTemplate::load(template)?;
    let s = load_mesh(scan)?;
    let lm = read_points_csv(landmarks)?;
    let p = pair.map(EmbeddingPair::load).transpose()?;
    let init = HeadParams::neutral(&t, c.rotation);
    let res = fit_3d(&t, &s, p.as_ref().map(|p| (p, c.code.as_str())), &lm, &init, &c.fit)?;
    info!("3D fit took {:.2} s", res.seconds);
    let outputs = write_fit(dir, &t, &res.params)?;
    let mut inputs: Vec<PathBuf> = vec![template.into(), scan.into(), landmarks.into()];
    inputs.extend(pair.map(Path::to_path_buf));
    Ok(Run {
        metrics: json!({
            "initial_objective": res.initial_objective,
            "objective": res.objective,
            "iterations": res.iterations,
            "evaluations": res.evaluations,
            "scan_to_mesh_mean": res.scan_to_mesh.mean,
            "scan_to_mesh_std": res.scan_to_mesh.std,
            "scan_to_mesh_mean_rel_bbox": res.scan_to_mesh.mean / s.bbox_diagonal(),
            "warning": res.warning,
        }),
        inputs,
        config: to_value(&c)?,
        seed: Some(c.fit.seed),
        outputs,
    })
}

fn fit2d_cmd(dir: &RunDir, cfg: Option<&Path>, template: &Path, cams: &Path, l2d: &Path) -> CliResult<Run> {
    let c: Fit2dFileConfig = config::load(cfg)?;
    let t = RiggedTemplate::load(template)?;
    let cameras = cameras_from_json(&read_text(cams)?)?;
    let lmks = Landmarks2D::load_csv(l2d)?;
    let init = HeadParams::neutral(&t, c.rotation);
    let res = fit_2d(&t, &cameras, &lmks, &init, &c.fit)?;
    let outputs = write_fit(dir, &t, &res.params)?;
    Ok(Run {
        metrics: json!({
            "reprojection_rms_px": res.reprojection_rms,
            "observations": res.observations,
            "views_used": res.views_used,
            "depth_ambiguous": res.depth_ambiguous,
            "iterations": res.iterations,
            "evaluations": res.evaluations,
            "warning": res.warning,
        }),
        inputs: vec![template.into(), cams.into(), l2d.into()],
        config: to_value(&c)?,
        seed: None,
        outputs,
    })
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    p.as_deref().ok_or_else(|| CliError::usage(format!("{flag} is required")))
}

fn eval_cmd(dir: &RunDir, cfg: Option<&Path>, a: &EvalArgs) -> CliResult<Run> {
    let c: EvalConfig = config::load(cfg)?;
    let mesh = load_mesh(&a.mesh)?;
    match a.against {
        EvalTarget::Oracle => {
            let tp = required(&a.template, "--template")?;
            let fp = required(&a.field, "--field")?;
            let template = load_mesh(tp)?;
            let field: BumpField = read_json(fp)?;
            if template.vertices.len() != mesh.vertices.len() {
                return Err(Error::Validation("mesh and template differ in vertex count".into()).into());
            }
            let truth: Vec<Vec3> = template.vertices.iter().map(|u| field.surface_point(&u.normalize())).collect();
            let errors: Vec<f64> = mesh.vertices.iter().zip(&truth).map(|(a, b)| (a - b).norm()).collect();
            let (mean, std, max) = error_stats(&errors);
            let truth_mesh = TriMesh::new(truth, template.faces.clone())?;
            let out = dir.write_text("errors.csv", &errors_csv(&errors))?;
            Ok(Run {
                metrics: json!({
                    "against": "oracle",
                    "mean": mean,
                    "std": std,
                    "max": max,
                    "mean_rel_bbox": mean / truth_mesh.bbox_diagonal(),
                    "vertices": errors.len(),
                }),
                inputs: vec![a.mesh.clone(), tp.into(), fp.into()],
                config: Value::Null,
                seed: None,
                outputs: vec![out],
            })
        }
        EvalTarget::Scan => {
            let sp = required(&a.scan, "--scan")?;
            let scan = load_mesh(sp)?;
            let e = scan_to_mesh_error(&scan, &mesh, c.samples, 0)?;
            Ok(Run {
                metrics: json!({
                    "against": "scan",
                    "mean": e.mean,
                    "std": e.std,
                    "mean_rel_bbox": e.mean / scan.bbox_diagonal(),
                }),
                inputs: vec![a.mesh.clone(), sp.into()],
                config: to_value(&c)?,
                seed: Some(0),
                outputs: vec![],
            })
        }
    }
}

fn report_cmd(dir: &RunDir, runs: &[PathBuf]) -> CliResult<Run> {
    let mut entries = Vec::new();
    let mut inputs = Vec::new();
    for r in runs {
        let mp = r.join("manifest.json");
        let xp = r.join("metrics.json");
        let manifest: Value = read_json(&mp)?;
        let metrics: Value = read_json(&xp)?;
        entries.push(json!({
            "run": r.display().to_string(),
            "command": manifest.get("command").cloned().unwrap_or(Value::Null),
            "metrics": metrics,
        }));
        inputs.push(mp);
        inputs.push(xp);
    }
    let out = dir.write_json("report.json", &entries)?;
    Ok(Run {
        metrics: json!({ "runs": entries.len(), "entries": entries }),
        inputs,
        config: Value::Null,
        seed: None,
        outputs: vec![out],
    })
}
