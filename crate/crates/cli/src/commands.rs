use std::path::{Path, PathBuf};

use graspkit::calib::{
    apply_mapping, fit_mapping, plan_trajectory, pose_from_grasp, simulate_execution, CameraRig, Intrinsics,
    KinematicChain, MappingMatrix, ObjectGeom, ObservationSet, Pose7, TableGeom,
};
use graspkit::dataset::{export_scenes, load_dataset, read_rgb, synth_dataset, Scene};
use graspkit::geometry::{grasp_from_maps, GraspPose2D};
use graspkit::head::{predict_maps, Predictor};
use graspkit::train::{
    evaluate, ratio_sweep, train_supervised_baseline, train_two_phase, SweepMode, SweepTable, TrainConfig,
};
use log::{debug, info, warn};
use ndarray::{s, Array3, Axis};
use serde::Serialize;

use crate::args::{
    CalibrateArgs, DataArgs, EvalArgs, ExecuteSimArgs, PredictArgs, SweepArgs, SynthArgs, TrainArgs,
};
use crate::manifest::RunManifest;
use crate::render::{grasp_panel, sweep_chart};
use crate::{CliError, CliResult};

pub const WEIGHTS_FILE: &str = "weights.gkw";
pub const SYNTH_DEFAULT_N: usize = 200;
pub const SYNTH_SIDE: usize = 64;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn create_out(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    graspkit::nn::write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn save_png(path: &Path, img: &image::RgbImage) -> CliResult<()> {
    img.save(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Deep-merge `over` into `base`; tables merge key by key, anything else is
/// replaced.
fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Defaults, overlaid by the config file, overlaid by flags.
pub fn effective_config(
    path: Option<&Path>,
    seed: Option<u64>,
    ratio: Option<f64>,
    sigma: Option<f64>,
) -> CliResult<TrainConfig> {
    let mut value = toml::Value::try_from(TrainConfig::default()).map_err(runtime)?;
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("--config {}: {e}", p.display())))?;
        let over: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("--config {}: {e}", p.display())))?;
        merge(&mut value, toml::Value::Table(over));
    }
    let mut cfg: TrainConfig = value
        .try_into()
        .map_err(|e| CliError::Usage(format!("--config: {e}")))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = ratio {
        cfg.ratio = r;
    }
    if let Some(s) = sigma {
        cfg.smooth_sigma = s;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

/// Scenes from a directory or from the `synth[:N]` generator.
fn load_scenes(data: &DataArgs, seed: u64, manifest: &mut RunManifest) -> CliResult<Vec<Scene>> {
    if let Some(rest) = data.data.strip_prefix("synth") {
        if !Path::new(&data.data).exists() && (rest.is_empty() || rest.starts_with(':')) {
            let n = match rest.strip_prefix(':') {
                Some(t) => t
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n >= 2)
                    .ok_or_else(|| CliError::Usage(format!("--data {}: expected synth:N with N >= 2", data.data)))?,
                None => SYNTH_DEFAULT_N,
            };
            manifest.input_tag(&format!("synth:{n}:{SYNTH_SIDE}:seed={seed}"));
            return Ok(synth_dataset(n, seed, SYNTH_SIDE, SYNTH_SIDE));
        }
    }
    let dir = PathBuf::from(&data.data);
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("--data {}: no such directory", dir.display())));
    }
    manifest.input(&dir)?;
    let scenes = load_dataset(&dir, data.size)?;
    info!("loaded {} scenes from {}", scenes.len(), dir.display());
    Ok(scenes)
}

fn existing_file(flag: &str, path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{flag} {}: no such file", path.display())))
    }
}

fn threads() -> CliResult<usize> {
    match std::env::var("GRASPKIT_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Usage(format!("GRASPKIT_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

pub fn train(a: TrainArgs) -> CliResult<()> {
    let mut m = RunManifest::start("train");
    let cfg = effective_config(a.common.config.as_deref(), a.common.seed, a.ratio, None)?;
    let scenes = load_scenes(&a.data, cfg.seed, &mut m)?;
    create_out(&a.common.out)?;
    let (predictor, report) = if a.baseline {
        let (net, r) = train_supervised_baseline::<f32>(&scenes, &cfg)?;
        (Predictor::Net(net), r)
    } else {
        let (model, r) = train_two_phase::<f32>(&scenes, &cfg)?;
        (Predictor::Assembled(model), r)
    };
    let archive = predictor.to_archive();
    let weights = a.common.out.join(WEIGHTS_FILE);
    archive.save(&weights)?;
    let report_path = a.common.out.join("report.json");
    write_json(&report_path, &report)?;

    m.config(&cfg);
    m.seed = Some(cfg.seed);
    m.weights_hash = Some(archive.content_hash());
    m.output(&weights)?;
    m.output(&report_path)?;
    m.finish(&a.common.out)?;
    println!(
        "trained {} on {} labelled scenes ({} trainable parameters); weights {}",
        if a.baseline { "baseline" } else { "rggcnn2" },
        report.labelled_ids.len(),
        report.trainable_params,
        weights.display()
    );
    Ok(())
}

/// The `sweep.csv` body: header `ratio,accuracy`, one row per requested ratio.
pub fn sweep_csv(table: &SweepTable) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["ratio", "accuracy"]).map_err(runtime)?;
    for (r, acc) in table.points() {
        w.write_record([r.to_string(), acc.to_string()]).map_err(runtime)?;
    }
    w.into_inner().map_err(runtime)
}

pub fn sweep(a: SweepArgs) -> CliResult<()> {
    let mut m = RunManifest::start("sweep");
    let cfg = effective_config(a.common.config.as_deref(), a.common.seed, None, None)?;
    let threads = threads()?;
    let scenes = load_scenes(&a.data, cfg.seed, &mut m)?;
    create_out(&a.common.out)?;
    let mode = if a.baseline { SweepMode::Baseline } else { SweepMode::SemiSupervised };
    let table = ratio_sweep::<f32>(&scenes, &a.ratios, &cfg, mode, !a.no_control, threads)?;

    let csv_path = a.common.out.join("sweep.csv");
    graspkit::nn::write_atomic(&csv_path, &sweep_csv(&table)?)?;
    let json_path = a.common.out.join("sweep.json");
    write_json(&json_path, &table)?;
    let png_path = a.common.out.join("sweep.png");
    save_png(
        &png_path,
        &sweep_chart(&table.points(), table.control.as_ref().map(|c| c.accuracy)),
    )?;

    m.config(&serde_json::json!({"train": cfg, "ratios": a.ratios, "mode": mode, "control": !a.no_control, "threads": threads}));
    m.seed = Some(cfg.seed);
    for p in [&csv_path, &json_path, &png_path] {
        m.output(p)?;
    }
    m.finish(&a.common.out)?;
    for (r, acc) in table.points() {
        println!("ratio {r}: accuracy {acc:.2}%");
    }
    if let Some(c) = &table.control {
        println!("control (ratio 1.0): accuracy {:.2}%", c.accuracy);
    }
    Ok(())
}

/// Crop an H×W×C image centrally so both sides divide by `f`.
fn crop_to_multiple(image: Array3<f32>, f: usize) -> CliResult<(Array3<f32>, (usize, usize))> {
    let (h, w, _) = image.dim();
    let (nh, nw) = (h - h % f, w - w % f);
    if nh == 0 || nw == 0 {
        return Err(CliError::Runtime(format!("image {w}x{h} is smaller than the model stride {f}")));
    }
    if (nh, nw) == (h, w) {
        return Ok((image, (0, 0)));
    }
    let (top, left) = ((h - nh) / 2, (w - nw) / 2);
    eprintln!("notice: image {w}x{h} is not divisible by {f}; center-cropped to {nw}x{nh}");
    Ok((image.slice(s![top..top + nh, left..left + nw, ..]).to_owned(), (top, left)))
}

#[derive(Debug, Serialize)]
struct Prediction {
    grasp: GraspPose2D<f64>,
    /// Rectangle corners in original image pixels.
    rect: [[f64; 2]; 4],
    no_grasp: bool,
    crop_offset: (usize, usize),
}

/// Load weights, run the model on one image, pick the grasp.
fn predict_image(weights: &Path, image: &Path, sigma: f64) -> CliResult<(Prediction, Array3<f32>, graspkit::Maps)> {
    let model = Predictor::<f32>::load(weights)?;
    let img = read_rgb(image)?;
    let (img, (top, left)) = crop_to_multiple(img, model.divisor())?;
    let chw = img.view().permuted_axes([2, 0, 1]).to_owned();
    let chw = if chw.len_of(Axis(0)) == model.input_channels() {
        chw
    } else {
        return Err(CliError::Runtime(format!(
            "model expects {} channels, image has {}",
            model.input_channels(),
            chw.len_of(Axis(0))
        )));
    };
    let maps = predict_maps(&model, &chw)?;
    let picked = grasp_from_maps(&maps, sigma as f32)?;
    let g = picked.grasp.cast::<f64>();
    let g = GraspPose2D::with_height(
        g.u() + left as f64,
        g.v() + top as f64,
        g.angle(),
        g.width(),
        g.height(),
        g.quality(),
    )?;
    let rect = *g.to_rect().vertices();
    Ok((
        Prediction {
            grasp: g,
            rect,
            no_grasp: picked.no_grasp,
            crop_offset: (top, left),
        },
        img,
        maps,
    ))
}

pub fn predict(a: PredictArgs) -> CliResult<()> {
    let mut m = RunManifest::start("predict");
    existing_file("--weights", &a.weights)?;
    existing_file("--image", &a.image)?;
    let cfg = effective_config(a.common.config.as_deref(), a.common.seed, None, a.sigma)?;
    create_out(&a.common.out)?;
    let (pred, img, maps) = predict_image(&a.weights, &a.image, cfg.smooth_sigma)?;
    if pred.no_grasp {
        warn!("quality map has no positive pixel; reporting the image center");
    }
    let grasp_path = a.common.out.join("grasp.json");
    write_json(&grasp_path, &pred.grasp)?;
    let rect_path = a.common.out.join("prediction.json");
    write_json(&rect_path, &pred)?;
    let panel_path = a.common.out.join("panel.png");
    let (top, left) = pred.crop_offset;
    let local = GraspPose2D::with_height(
        pred.grasp.u() - left as f64,
        pred.grasp.v() - top as f64,
        pred.grasp.angle(),
        pred.grasp.width(),
        pred.grasp.height(),
        pred.grasp.quality(),
    )?;
    save_png(&panel_path, &grasp_panel(&img, &maps, Some(&local.to_rect())))?;

    m.config(&serde_json::json!({"smooth_sigma": cfg.smooth_sigma}));
    m.input(&a.weights)?;
    m.input(&a.image)?;
    for p in [&grasp_path, &rect_path, &panel_path] {
        m.output(p)?;
    }
    m.finish(&a.common.out)?;
    let g = &pred.grasp;
    println!(
        "grasp u={:.1} v={:.1} angle={:.4} width={:.2} quality={:.4}",
        g.u(),
        g.v(),
        g.angle(),
        g.width(),
        g.quality()
    );
    Ok(())
}

pub fn eval(a: EvalArgs) -> CliResult<()> {
    let mut m = RunManifest::start("eval");
    existing_file("--weights", &a.weights)?;
    let cfg = effective_config(a.common.config.as_deref(), a.common.seed, None, a.sigma)?;
    let scenes = load_scenes(&a.data, cfg.seed, &mut m)?;
    create_out(&a.common.out)?;
    let model = Predictor::<f32>::load(&a.weights)?;
    let result = evaluate(&model, &scenes, &cfg)?;
    let path = a.common.out.join("eval.json");
    write_json(&path, &result)?;

    m.config(&cfg);
    m.seed = Some(cfg.seed);
    m.input(&a.weights)?;
    m.output(&path)?;
    m.finish(&a.common.out)?;
    println!(
        "accuracy {:.2}% ({} / {} scenes, {} without labels excluded)",
        result.accuracy,
        result.n_success,
        result.n_scenes,
        result.excluded.len()
    );
    Ok(())
}

pub fn calibrate(a: CalibrateArgs) -> CliResult<()> {
    let mut m = RunManifest::start("calibrate");
    existing_file("--data", &a.data)?;
    let obs = ObservationSet::read_csv(&a.data)?;
    let dups = obs.duplicates();
    if dups > 0 {
        warn!("{dups} duplicate observation pairs");
    }
    let mapping = fit_mapping(&obs)?;
    create_out(&a.common.out)?;
    let path = a.common.out.join("mapping.json");
    mapping.save_json(&path)?;
    let residual = mapping.residual(&obs);

    m.config(&serde_json::json!({"observations": obs.len(), "duplicates": dups, "residual": residual}));
    m.input(&a.data)?;
    m.output(&path)?;
    m.finish(&a.common.out)?;
    println!("fitted mapping on {} observations; Frobenius residual {residual:.3e}", obs.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct ExecutionSummary {
    grasp: GraspPose2D<f64>,
    camera_pose: Pose7,
    robot_pose: Pose7,
    waypoints: Vec<graspkit::calib::Waypoint>,
    success: bool,
    aborted: Option<String>,
    flags: Vec<String>,
    steps: usize,
}

pub fn execute_sim(a: ExecuteSimArgs) -> CliResult<()> {
    let mut m = RunManifest::start("execute-sim");
    existing_file("--weights", &a.weights)?;
    existing_file("--image", &a.image)?;
    let cfg = effective_config(a.common.config.as_deref(), a.common.seed, None, a.sigma)?;
    let table = TableGeom::new(0.0, a.transit).map_err(|e| CliError::Usage(format!("--transit: {e}")))?;
    let chain = match &a.chain {
        Some(p) => {
            existing_file("--chain", p)?;
            m.input(p)?;
            KinematicChain::from_file(p)?
        }
        None => KinematicChain::arm7(),
    };
    let mapping = match &a.mapping {
        Some(p) => {
            existing_file("--mapping", p)?;
            m.input(p)?;
            MappingMatrix::load_json(p)?
        }
        None => {
            info!("no --mapping given; fitting the built-in overhead rig");
            fit_mapping(&CameraRig::default().observations(cfg.seed))?
        }
    };
    create_out(&a.common.out)?;

    let (pred, img, _) = predict_image(&a.weights, &a.image, cfg.smooth_sigma)?;
    let (h, w, _) = img.dim();
    let (top, left) = pred.crop_offset;
    let k = Intrinsics {
        fx: a.fx,
        fy: a.fy,
        cx: a.cx.unwrap_or(left as f64 + (w as f64 - 1.0) / 2.0),
        cy: a.cy.unwrap_or(top as f64 + (h as f64 - 1.0) / 2.0),
    };
    let camera_pose = pose_from_grasp(&pred.grasp, a.depth, &k)?;
    let robot_pose = apply_mapping(&mapping, &camera_pose)?;
    let object = ObjectGeom {
        depth_gpc: a.depth_gpc,
        height_gpc: a.height_gpc,
    };
    let home = robot_pose.with_position([robot_pose.x, robot_pose.y, table.transit_z() + 0.25]);
    let waypoints = plan_trajectory(&robot_pose, &object, &table, &home)?;
    for w in &waypoints {
        debug!("waypoint {}: {:?}", w.label, w.pose.to_vec7());
    }
    let log = simulate_execution(&chain, &waypoints, &table);

    let log_path = a.common.out.join("execution.jsonl");
    log.write_jsonl(&log_path)?;
    let mut flags: Vec<String> = log.steps.iter().flat_map(|s| s.flags.iter().cloned()).collect();
    flags.sort();
    flags.dedup();
    let summary = ExecutionSummary {
        grasp: pred.grasp,
        camera_pose,
        robot_pose,
        waypoints,
        success: log.success,
        aborted: log.aborted.clone(),
        flags,
        steps: log.steps.len(),
    };
    let summary_path = a.common.out.join("execution.json");
    write_json(&summary_path, &summary)?;

    m.config(&serde_json::json!({
        "smooth_sigma": cfg.smooth_sigma,
        "intrinsics": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy},
        "depth": a.depth,
        "object": object,
        "table": table,
        "chain": chain.name,
    }));
    m.seed = Some(cfg.seed);
    m.input(&a.weights)?;
    m.input(&a.image)?;
    m.output(&log_path)?;
    m.output(&summary_path)?;
    m.finish(&a.common.out)?;
    if log.success {
        println!(
            "execution succeeded: {} steps, grasp at robot ({:.3}, {:.3}, {:.3})",
            log.steps.len(),
            robot_pose.x,
            robot_pose.y,
            robot_pose.z
        );
        Ok(())
    } else {
        let why = log
            .aborted
            .clone()
            .unwrap_or_else(|| format!("safety flags raised: {}", summary.flags.join(", ")));
        Err(CliError::Runtime(format!("execution failed: {why}")))
    }
}

pub fn synth_data(a: SynthArgs) -> CliResult<()> {
    let mut m = RunManifest::start("synth-data");
    let seed = a.common.seed.unwrap_or(0);
    let scenes = synth_dataset(a.n, seed, a.size, a.size);
    create_out(&a.common.out)?;
    let written = export_scenes(&scenes, &a.common.out)?;
    m.config(&serde_json::json!({"n": a.n, "size": a.size}));
    m.seed = Some(seed);
    m.input_tag(&format!("synth:{}:{}:seed={seed}", a.n, a.size));
    for p in &written {
        m.output(p)?;
    }
    m.finish(&a.common.out)?;
    println!("wrote {} scenes to {}", scenes.len(), a.common.out.display());
    Ok(())
}
