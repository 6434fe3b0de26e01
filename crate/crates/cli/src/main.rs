//! Command-line front end: synthetic data, fisheye splitting, calibration,
//! depth priors, evaluation and point clouds.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use surround_geom::calib::{
    calibrate_sequence, BundleConfig, CalibrationConfig, Matcher, PatchMatcher, SequenceImages,
};
use surround_geom::geometry::CameraModel;
use surround_geom::io::{
    frame_name, image_path, list_files, load_frame, read_depth_pfm, read_gray_png, read_mask_png, read_rig,
    write_depth_pfm, write_gray_png, write_mask_png, write_ply, write_rig, DatasetLayout, PlyFormat,
};
use surround_geom::metrics::{depth_consistency, evaluate, DepthView};
use surround_geom::rig::RigCalibration;
use surround_geom::stereo::{build_all_priors, AggregationPaths, PriorOptions, Sgm, SgmParams};
use surround_geom::synth::{
    perturb_rig, render, ExactMatcher, ExactMatcherOptions, PresetOptions, RenderOptions, RigPreset, SyntheticScene,
};
use surround_geom::virtual_pinhole::{virtual_id, virtual_rig, warp_to_virtual, VirtualOptions};
use surround_geom::{Error, Grid, Result};

const THREADS_ENV: &str = "SURROUND_GEOM_THREADS";

#[derive(Parser, Debug)]
#[command(name = "surround-geom", version, about = "Geometry tools for surround camera rings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic sequence with ground-truth depth and rig files.
    Synth(SynthArgs),
    /// Replace fisheye cameras by pairs of virtual pinholes.
    FisheyeSplit(SplitArgs),
    /// Refine the relative camera poses of a rig from a sequence.
    Calibrate(CalibrateArgs),
    /// Compute stereo depth priors for every camera at one frame.
    Prior(PriorArgs),
    /// Compare predicted depth maps with ground truth.
    Eval(EvalArgs),
    /// Fuse depth maps of one frame into a world-frame point cloud.
    Pointcloud(PointcloudArgs),
}

#[derive(clap::Args, Debug)]
struct SynthArgs {
    #[arg(long, value_parser = parse_preset)]
    preset: RigPreset,
    #[arg(long, default_value_t = 7)]
    frames: usize,
    /// Largest rotation perturbation of the written perturbed rig, degrees.
    #[arg(long, default_value_t = 0.0)]
    noise_rot: f64,
    /// Largest translation perturbation of the written perturbed rig, meters.
    #[arg(long, default_value_t = 0.0)]
    noise_trans: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Image width; the preset default when omitted.
    #[arg(long, requires = "height")]
    width: Option<usize>,
    #[arg(long, requires = "width")]
    height: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    rig: PathBuf,
    #[arg(long)]
    images: PathBuf,
    /// Also render ground-truth depth for the virtual cameras from this
    /// synthetic scene.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 100.0)]
    hfov: f64,
    #[arg(long, default_value_t = 640)]
    width: usize,
    #[arg(long, default_value_t = 480)]
    height: usize,
    #[arg(long, default_value_t = 5.0)]
    margin: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MatcherKind {
    /// Corner and patch correlation matching on the images.
    Patch,
    /// Ground-truth correspondences from a synthetic scene.
    Exact,
}

#[derive(clap::Args, Debug)]
struct CalibrateArgs {
    /// Initial rig.
    #[arg(long)]
    rig: PathBuf,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    frames: usize,
    /// Minimum match count per view pair.
    #[arg(long, default_value_t = 200)]
    beta: usize,
    /// Largest accepted change of a relative translation, meters.
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = MatcherKind::Patch)]
    matcher: MatcherKind,
    /// Scene of the exact matcher.
    #[arg(long, required_if_eq("matcher", "exact"))]
    scene: Option<PathBuf>,
    /// True rig of the exact matcher.
    #[arg(long, required_if_eq("matcher", "exact"))]
    truth: Option<PathBuf>,
    /// Exact matcher landmark count.
    #[arg(long, default_value_t = 500)]
    landmarks: usize,
    /// Exact matcher pixel noise.
    #[arg(long, default_value_t = 0.0)]
    noise_px: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Paths {
    #[value(name = "5")]
    P5,
    #[value(name = "8")]
    P8,
}

#[derive(clap::Args, Debug)]
struct PriorArgs {
    #[arg(long)]
    rig: PathBuf,
    #[arg(long)]
    images: PathBuf,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    #[arg(long)]
    out: PathBuf,
    /// Match at half resolution and upsample the result.
    #[arg(long)]
    half_res: bool,
    /// Number of SGM aggregation paths.
    #[arg(long, value_enum, default_value_t = Paths::P8)]
    paths: Paths,
    #[arg(long, default_value_t = 200.0)]
    max_range: f64,
    #[arg(long, default_value_t = 128)]
    max_disp: usize,
}

#[derive(clap::Args, Debug)]
struct EvalArgs {
    /// Directory of predicted `.pfm` depth maps.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth directory with the same relative layout.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 200.0)]
    max_range: f64,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Rig for cross-view depth consistency of adjacent cameras.
    #[arg(long, requires = "frame")]
    rig: Option<PathBuf>,
    #[arg(long, requires = "rig")]
    frame: Option<usize>,
}

#[derive(clap::Args, Debug)]
struct PointcloudArgs {
    #[arg(long)]
    rig: PathBuf,
    /// Directory of `<camera>/<frame>.pfm` depth maps.
    #[arg(long)]
    priors: PathBuf,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Images used to color the points.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "binary", value_parser = ["ascii", "binary"])]
    format: String,
}

fn parse_preset(s: &str) -> std::result::Result<RigPreset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Synth(a) => synth(&a),
        Command::FisheyeSplit(a) => fisheye_split(&a),
        Command::Calibrate(a) => calibrate(&a),
        Command::Prior(a) => prior(&a),
        Command::Eval(a) => eval(&a),
        Command::Pointcloud(a) => pointcloud(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("{THREADS_ENV} must be a non-negative integer, got {raw:?}"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    create_parent(path)?;
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let s = a.preset.build(&PresetOptions {
        frames: a.frames,
        size: a.width.zip(a.height),
        scene_seed: a.seed,
        ..Default::default()
    })?;
    let perturbed = perturb_rig(&s.rig, a.noise_rot, a.noise_trans, a.seed)?;
    let layout = DatasetLayout::new(&a.out);
    fs::create_dir_all(&a.out)?;
    write_rig(&layout.rig_path(), &s.rig)?;
    write_rig(&a.out.join("rig_perturbed.json"), &perturbed)?;
    fs::write(a.out.join("scene.json"), serde_json::to_string_pretty(&s.scene)? + "\n")?;
    let options = RenderOptions::default();
    for cam in &s.rig.cameras {
        fs::create_dir_all(layout.image_dir().join(&cam.id))?;
        fs::create_dir_all(layout.depth_dir().join(&cam.id))?;
        for t in 0..a.frames {
            let r = render(&s.scene, &cam.model, &s.rig.absolute_pose(&cam.id, t)?, &options);
            write_gray_png(&layout.image_path(&cam.id, t), &r.image)?;
            write_depth_pfm(&layout.depth_path(&cam.id, t), &r.depth)?;
        }
    }
    println!(
        "wrote {} cameras x {} frames of {} to {}",
        s.rig.cameras.len(),
        a.frames,
        a.preset.name(),
        a.out.display()
    );
    Ok(())
}

fn read_scene(path: &Path) -> Result<SyntheticScene> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn fisheye_split(a: &SplitArgs) -> Result<()> {
    let rig = read_rig(&a.rig)?;
    let options = VirtualOptions {
        target_hfov_deg: a.hfov,
        width: a.width,
        height: a.height,
        edge_margin_deg: a.margin,
    };
    let (vrig, specs) = virtual_rig(&rig, &options)?;
    let scene = a.scene.as_deref().map(read_scene).transpose()?;
    let layout = DatasetLayout::new(&a.out);
    fs::create_dir_all(&a.out)?;
    write_rig(&layout.rig_path(), &vrig)?;
    let mask_dir = a.out.join("masks");
    for cam in &rig.cameras {
        let CameraModel::Fisheye(fm) = &cam.model else {
            // pinhole cameras pass through unchanged
            for t in 0..rig.num_frames() {
                let src = image_path(&a.images, &cam.id, t);
                if src.exists() {
                    let dst = layout.image_path(&cam.id, t);
                    create_parent(&dst)?;
                    fs::copy(&src, &dst)?;
                }
            }
            continue;
        };
        for spec in specs.iter().filter(|s| s.source_camera_id == cam.id) {
            let vid = virtual_id(&cam.id, spec.side);
            for dir in [layout.image_dir(), mask_dir.clone()] {
                fs::create_dir_all(dir.join(&vid))?;
            }
            if scene.is_some() {
                fs::create_dir_all(layout.depth_dir().join(&vid))?;
            }
            for t in 0..rig.num_frames() {
                let src = image_path(&a.images, &cam.id, t);
                if !src.exists() {
                    continue;
                }
                let warped = warp_to_virtual(&read_gray_png(&src)?, &cam.id, fm, &cam.pose_rel, spec)?;
                write_gray_png(&layout.image_path(&vid, t), &warped.pixels)?;
                write_mask_png(&mask_dir.join(&vid).join(frame_name(t, "png")), &warped.valid_mask)?;
                if let Some(scene) = &scene {
                    let vcam = vrig.camera(&vid)?;
                    let r = render(
                        scene,
                        &vcam.model,
                        &vrig.absolute_pose(&vid, t)?,
                        &RenderOptions::default(),
                    );
                    let depth = Grid::from_fn(a.width, a.height, |x, y| {
                        if *warped.valid_mask.get(x, y) {
                            *r.depth.get(x, y)
                        } else {
                            0.0
                        }
                    });
                    write_depth_pfm(&layout.depth_path(&vid, t), &depth)?;
                }
            }
        }
    }
    println!("wrote {} virtual cameras to {}", vrig.cameras.len(), a.out.display());
    Ok(())
}

fn calibrate(a: &CalibrateArgs) -> Result<()> {
    let init = read_rig(&a.rig)?;
    let config = CalibrationConfig {
        frames: a.frames,
        bundle: BundleConfig {
            beta: a.beta,
            alpha_m: a.alpha,
            max_iterations: a.max_iterations,
            ..Default::default()
        },
        seed: a.seed,
        ..Default::default()
    };
    let (matcher, images): (Box<dyn Matcher>, SequenceImages) = match a.matcher {
        MatcherKind::Patch => {
            let dir = a
                .images
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument("the patch matcher needs --images".into()))?;
            let mut images = SequenceImages::empty(init.cameras.len(), a.frames);
            for t in 0..a.frames.min(init.num_frames()) {
                for (c, img) in load_frame(dir, &init, t)?.into_iter().enumerate() {
                    images.images[c][t] = Some(img);
                }
            }
            (Box::new(PatchMatcher::default()), images)
        }
        MatcherKind::Exact => {
            let scene = read_scene(a.scene.as_deref().expect("required by clap"))?;
            let truth = read_rig(a.truth.as_deref().expect("required by clap"))?;
            let same = truth.cameras.len() == init.cameras.len()
                && truth.cameras.iter().zip(&init.cameras).all(|(x, y)| x.id == y.id);
            if !same {
                return Err(Error::InvalidArgument(
                    "--truth and --rig list different cameras".into(),
                ));
            }
            let m = ExactMatcher::new(
                &scene,
                &truth,
                a.frames,
                &ExactMatcherOptions {
                    num_landmarks: a.landmarks,
                    noise_px: a.noise_px,
                    seed: a.seed,
                    ..Default::default()
                },
            )?;
            (Box::new(m), SequenceImages::empty(init.cameras.len(), a.frames))
        }
    };
    let (rig, report) = calibrate_sequence(&images, &init, matcher.as_ref(), &config)?;
    create_parent(&a.out)?;
    write_rig(&a.out, &rig)?;
    if let Some(path) = &a.report {
        write_json(path, &serde_json::to_value(&report)?)?;
    }
    println!(
        "rms {:.3} -> {:.3} px, {} iterations, {} observations",
        report.initial_rms, report.final_rms, report.iterations, report.num_observations
    );
    if report.accepted {
        Ok(())
    } else {
        Err(Error::InsufficientData(format!(
            "calibration rejected ({}); the initial rig was written unchanged",
            report.failure.as_deref().unwrap_or("unknown reason")
        )))
    }
}

fn prior(a: &PriorArgs) -> Result<()> {
    let rig = read_rig(&a.rig)?;
    if a.frame >= rig.num_frames() {
        return Err(Error::InvalidArgument(format!(
            "frame {} outside the {} frames of the rig",
            a.frame,
            rig.num_frames()
        )));
    }
    let images = load_frame(&a.images, &rig, a.frame)?;
    let sgm = Sgm {
        params: SgmParams {
            paths: if a.paths == Paths::P5 {
                AggregationPaths::Five
            } else {
                AggregationPaths::Eight
            },
            ..Default::default()
        },
    };
    let options = PriorOptions {
        max_range: a.max_range,
        max_disp: a.max_disp,
        half_resolution: a.half_res,
    };
    let priors = build_all_priors(&rig, &images, a.frame, &sgm, &options)?;
    for (cam, p) in rig.cameras.iter().zip(&priors) {
        let dir = a.out.join(&cam.id);
        fs::create_dir_all(&dir)?;
        write_depth_pfm(&dir.join(frame_name(a.frame, "pfm")), &p.depth)?;
        write_mask_png(&dir.join(format!("{:06}_mask.png", a.frame)), &p.valid)?;
        println!("{}: {:.1}% valid", cam.id, 100.0 * p.valid.fraction_true());
    }
    Ok(())
}

/// Validity mask stored next to a depth map, if any.
fn mask_path(depth_path: &Path) -> Option<PathBuf> {
    let stem = depth_path.file_stem()?.to_str()?;
    Some(depth_path.with_file_name(format!("{stem}_mask.png")))
}

fn load_prediction(path: &Path) -> Result<(Grid<f64>, Grid<bool>)> {
    let depth = read_depth_pfm(path)?;
    let mut valid = depth.map(|&d| d > 0.0 && d.is_finite());
    if let Some(mp) = mask_path(path).filter(|p| p.exists()) {
        let mask = read_mask_png(&mp)?;
        depth.ensure_same_dims(&mask, "depth vs mask")?;
        for (v, m) in valid.data_mut().iter_mut().zip(mask.data()) {
            *v &= *m;
        }
    }
    Ok((depth, valid))
}

fn eval(a: &EvalArgs) -> Result<()> {
    let files = list_files(&a.pred, "pfm")?;
    if files.is_empty() {
        return Err(Error::NotFound(format!("no .pfm files below {}", a.pred.display())));
    }
    let (mut all_pred, mut all_gt, mut all_mask) = (Vec::new(), Vec::new(), Vec::new());
    let mut per_file = serde_json::Map::new();
    for rel in &files {
        let gt_path = a.gt.join(rel);
        if !gt_path.exists() {
            return Err(Error::NotFound(gt_path.display().to_string()));
        }
        let (pred, valid) = load_prediction(&a.pred.join(rel))?;
        let gt = read_depth_pfm(&gt_path)?;
        let entry = match evaluate(&pred, &gt, &valid, a.max_range) {
            Ok(r) => serde_json::to_value(&r)?,
            Err(Error::NoValidPixels) => Value::Null,
            Err(e) => return Err(e),
        };
        per_file.insert(rel.display().to_string(), entry);
        all_pred.extend_from_slice(pred.data());
        all_gt.extend_from_slice(gt.data());
        all_mask.extend_from_slice(valid.data());
    }
    let n = all_pred.len();
    let pooled = evaluate(
        &Grid::from_vec(n, 1, all_pred)?,
        &Grid::from_vec(n, 1, all_gt)?,
        &Grid::from_vec(n, 1, all_mask)?,
        a.max_range,
    )?;
    let mut out = json!({
        "max_range": a.max_range,
        "pooled": pooled,
        "files": per_file,
    });
    if let (Some(rig_path), Some(frame)) = (&a.rig, a.frame) {
        out["dep_con"] = dep_con(&read_rig(rig_path)?, frame, a)?;
    }
    println!(
        "abs_rel {:.4} sq_rel {:.4} rmse {:.3} delta1 {:.4} over {} pixels",
        pooled.abs_rel, pooled.sq_rel, pooled.rmse, pooled.delta1, pooled.n_valid
    );
    if let Some(path) = &a.json {
        write_json(path, &out)?;
    }
    Ok(())
}

fn dep_con(rig: &RigCalibration, frame: usize, a: &EvalArgs) -> Result<Value> {
    let load = |id: &str| -> Result<Option<(Grid<f64>, Grid<f64>)>> {
        let rel = Path::new(id).join(frame_name(frame, "pfm"));
        let (pp, gp) = (a.pred.join(&rel), a.gt.join(&rel));
        if !pp.exists() || !gp.exists() {
            return Ok(None);
        }
        let (mut pred, valid) = load_prediction(&pp)?;
        for (d, v) in pred.data_mut().iter_mut().zip(valid.data()) {
            if !*v {
                *d = 0.0;
            }
        }
        Ok(Some((pred, read_depth_pfm(&gp)?)))
    };
    let mut pairs = serde_json::Map::new();
    let mut values = Vec::new();
    for (i, j) in rig.adjacent_pairs()? {
        let (ca, cb) = (&rig.cameras[i], &rig.cameras[j]);
        let (Some((da, ga)), Some((db, gb))) = (load(&ca.id)?, load(&cb.id)?) else {
            continue;
        };
        let (pa, pb) = (rig.absolute_pose(&ca.id, frame)?, rig.absolute_pose(&cb.id, frame)?);
        let va = DepthView {
            depth: &da,
            gt: &ga,
            model: &ca.model,
            pose: &pa,
        };
        let vb = DepthView {
            depth: &db,
            gt: &gb,
            model: &cb.model,
            pose: &pb,
        };
        let entry = match depth_consistency(&va, &vb) {
            Ok(r) => {
                values.push(r.dep_con);
                serde_json::to_value(r)?
            }
            Err(Error::NoValidPixels) => Value::Null,
            Err(e) => return Err(e),
        };
        pairs.insert(format!("{}-{}", ca.id, cb.id), entry);
    }
    let mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
    if let Some(m) = mean {
        println!("dep_con {m:.4} over {} pairs", values.len());
    }
    Ok(json!({ "mean": mean, "pairs": pairs }))
}

fn pointcloud(a: &PointcloudArgs) -> Result<()> {
    let rig = read_rig(&a.rig)?;
    let format: PlyFormat = a.format.parse()?;
    let mut points = Vec::new();
    for cam in &rig.cameras {
        let path = a.priors.join(&cam.id).join(frame_name(a.frame, "pfm"));
        if !path.exists() {
            continue;
        }
        let (depth, valid) = load_prediction(&path)?;
        let image = match &a.images {
            Some(dir) => Some(read_gray_png(&image_path(dir, &cam.id, a.frame))?),
            None => None,
        };
        let pose = rig.absolute_pose(&cam.id, a.frame)?;
        points.extend(surround_geom::io::depth_to_points(
            &depth,
            &valid,
            &cam.model,
            &pose,
            image.as_ref(),
        )?);
    }
    if points.is_empty() {
        return Err(Error::NoValidPixels);
    }
    create_parent(&a.out)?;
    write_ply(&a.out, &points, format)?;
    println!("wrote {} points to {}", points.len(), a.out.display());
    Ok(())
}
