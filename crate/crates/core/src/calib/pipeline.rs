use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use nalgebra::Vector3;

use super::bundle::{bundle_adjust, BundleConfig, BundleResult, CalibrationReport, ScaleGauge};
use super::graph::{merge_tracks, CorrespondenceGraph, Observation, PairMatches, ViewId, ViewPair};
use super::matcher::{Matcher, View};
use super::ransac::{ransac_essential, RansacOptions};
use super::triangulate::triangulate_midpoint;
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Pose};
use crate::grid::Grid;
use crate::rig::{RigCalibration, RigCamera};

/// Gray images indexed `[camera][frame]`, camera order as in the rig.
/// Matchers that ignore pixels can run on [`SequenceImages::empty`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SequenceImages {
    pub images: Vec<Vec<Option<Grid<f32>>>>,
}

impl SequenceImages {
    pub fn empty(num_cameras: usize, num_frames: usize) -> Self {
        Self {
            images: vec![vec![None; num_frames]; num_cameras],
        }
    }

    pub fn get(&self, view: ViewId) -> Option<&Grid<f32>> {
        self.images.get(view.camera)?.get(view.frame)?.as_ref()
    }

    pub fn num_frames(&self) -> usize {
        self.images.iter().map(Vec::len).min().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    /// Frames used for calibration, taken from the start of the sequence.
    pub frames: usize,
    pub ransac: RansacOptions,
    pub bundle: BundleConfig,
    pub seed: u64,
    /// After a first adjustment, observations with a reprojection error
    /// above this are dropped and the adjustment is rerun. `None` disables.
    pub outlier_threshold_px: Option<f64>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            frames: 7,
            ransac: RansacOptions::default(),
            bundle: BundleConfig::default(),
            seed: 0,
            outlier_threshold_px: Some(6.0),
        }
    }
}

fn focal_px(model: &CameraModel) -> f64 {
    match model {
        CameraModel::Pinhole(k) => 0.5 * (k.fx + k.fy),
        CameraModel::Fisheye(m) => m.f,
    }
}

fn pair_seed(seed: u64, pair: &ViewPair) -> u64 {
    [pair.a.camera, pair.a.frame, pair.b.camera, pair.b.frame]
        .iter()
        .fold(seed ^ 0x5851_f42d_4c95_7f2d, |h, v| {
            (h ^ (*v as u64)).wrapping_mul(0x1000_0000_01b3).rotate_left(17)
        })
}

/// Matches every adjacent-camera view pair over the first `frames` frames
/// (all frame combinations) and keeps the RANSAC inliers of an essential
/// matrix fit. Pairs where the matcher fails or RANSAC finds no model are
/// omitted.
pub fn verified_pair_matches(
    images: &SequenceImages,
    rig: &RigCalibration,
    frames: usize,
    matcher: &dyn Matcher,
    ransac: &RansacOptions,
    seed: u64,
) -> Result<Vec<PairMatches>> {
    if frames < 2 {
        return Err(Error::InvalidArgument("at least two frames are required".into()));
    }
    let mut pairs = Vec::new();
    for (ca, cb) in rig.adjacent_pairs()? {
        for ta in 0..frames {
            for tb in 0..frames {
                pairs.push(ViewPair::new(ViewId::new(ca, ta), ViewId::new(cb, tb)));
            }
        }
    }
    let results: Vec<Option<PairMatches>> = pairs
        .par_iter()
        .map(|pair| {
            let va = View {
                id: pair.a,
                image: images.get(pair.a),
            };
            let vb = View {
                id: pair.b,
                image: images.get(pair.b),
            };
            let matches = matcher.match_pair(&va, &vb).ok()?;
            let (ma, mb) = (&rig.cameras[pair.a.camera].model, &rig.cameras[pair.b.camera].model);
            let mut kept = Vec::with_capacity(matches.len());
            let mut ra = Vec::with_capacity(matches.len());
            let mut rb = Vec::with_capacity(matches.len());
            for (pa, pb) in &matches {
                if let (Ok(a), Ok(b)) = (ma.pixel_ray(pa), mb.pixel_ray(pb)) {
                    kept.push((*pa, *pb));
                    ra.push(a);
                    rb.push(b);
                }
            }
            let focal = 0.5 * (focal_px(ma) + focal_px(mb));
            let mut rng = ChaCha8Rng::seed_from_u64(pair_seed(seed, pair));
            let fit = ransac_essential(&ra, &rb, focal, ransac, &mut rng)?;
            let matches: Vec<_> = kept
                .iter()
                .zip(&fit.inliers)
                .filter(|(_, ok)| **ok)
                .map(|(m, _)| *m)
                .collect();
            Some(PairMatches { pair: *pair, matches })
        })
        .collect();
    Ok(results
        .into_iter()
        .flatten()
        .filter(|p| !p.matches.is_empty())
        .collect())
}

/// Landmarks closer than this to an observing camera center are treated as
/// mismatches.
pub const MIN_LANDMARK_DISTANCE_M: f64 = 0.5;

/// Triangulates every landmark from its observations under `rig`, replacing
/// the stored positions. Landmarks that cannot be triangulated or lie within
/// [`MIN_LANDMARK_DISTANCE_M`] of an observing camera are dropped, as are
/// observations that land behind their camera.
pub fn triangulate_graph(graph: &mut CorrespondenceGraph, rig: &RigCalibration) -> Result<()> {
    let mut rays: Vec<Vec<(nalgebra::Vector3<f64>, nalgebra::Vector3<f64>)>> = vec![Vec::new(); graph.landmarks.len()];
    for o in &graph.observations {
        let cam = &rig.cameras[o.view.camera];
        let pose = absolute(rig, o.view)?;
        if let Ok(dir) = cam.model.pixel_ray(&o.pixel) {
            rays[o.landmark].push((pose.translation, pose.transform_vector(&dir)));
        }
    }
    let positions: Vec<Option<_>> = rays
        .iter()
        .map(|r| triangulate_midpoint(r).filter(|x| r.iter().all(|(c, _)| (x - c).norm() >= MIN_LANDMARK_DISTANCE_M)))
        .collect();
    let mut kept = Vec::with_capacity(graph.observations.len());
    for o in &graph.observations {
        let Some(x) = positions[o.landmark] else { continue };
        let cam = &rig.cameras[o.view.camera];
        let local = absolute(rig, o.view)?.inverse_transform_point(&x);
        if cam.model.project(&local).is_ok() {
            kept.push(*o);
        }
    }
    graph.landmarks = positions.iter().map(|p| p.unwrap_or_default()).collect();
    graph.observations = kept;
    graph.compact();
    Ok(())
}

fn absolute(rig: &RigCalibration, view: ViewId) -> Result<Pose> {
    let front = rig
        .front_trajectory
        .get(view.frame)
        .ok_or_else(|| Error::NotFound(format!("frame {}", view.frame)))?;
    Ok(front.compose(&rig.cameras[view.camera].pose_rel))
}

/// Builds a correspondence graph from verified pair matches: pairs with
/// fewer than `beta` matches are discarded, the rest are merged into tracks
/// and triangulated under `rig`.
pub fn build_graph(pairs: &[PairMatches], rig: &RigCalibration, beta: usize) -> Result<CorrespondenceGraph> {
    let surviving: Vec<PairMatches> = pairs.iter().filter(|p| p.matches.len() >= beta).cloned().collect();
    if surviving.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} view pairs with at least {beta} verified matches",
            surviving.len()
        )));
    }
    let mut graph = CorrespondenceGraph::default();
    for track in merge_tracks(&surviving) {
        let id = graph.landmarks.len();
        graph.landmarks.push(Default::default());
        for (view, pixel) in track {
            graph.observations.push(Observation {
                view,
                landmark: id,
                pixel,
            });
        }
    }
    graph.pair_counts = surviving.iter().map(|p| (p.pair, p.matches.len())).collect();
    triangulate_graph(&mut graph, rig)?;
    if graph.landmarks.is_empty() {
        return Err(Error::InsufficientData("no landmark could be triangulated".into()));
    }
    Ok(graph)
}

/// Extracts, verifies, filters and triangulates correspondences over the
/// first `frames` frames.
pub fn extract_correspondences(
    images: &SequenceImages,
    rig: &RigCalibration,
    frames: usize,
    matcher: &dyn Matcher,
    ransac: &RansacOptions,
    beta: usize,
    seed: u64,
) -> Result<CorrespondenceGraph> {
    rig.validate()?;
    if rig.num_frames() < frames {
        return Err(Error::InvalidArgument(format!(
            "rig trajectory has {} frames, {frames} requested",
            rig.num_frames()
        )));
    }
    let pairs = verified_pair_matches(images, rig, frames, matcher, ransac, seed)?;
    build_graph(&pairs, rig, beta)
}

fn truncated(rig: &RigCalibration, frames: usize) -> RigCalibration {
    let mut r = rig.clone();
    r.front_trajectory.truncate(frames);
    r
}

/// Full calibration of one sequence: extract, filter, bundle adjust. On
/// acceptance the optimized relative poses and the first `frames`
/// trajectory poses replace those of `init`; otherwise `init` is returned
/// unchanged and the report says why.
pub fn calibrate_sequence(
    images: &SequenceImages,
    init: &RigCalibration,
    matcher: &dyn Matcher,
    config: &CalibrationConfig,
) -> Result<(RigCalibration, CalibrationReport)> {
    init.validate()?;
    if init.num_frames() < config.frames || config.frames < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least {} frames (2 minimum), rig has {}",
            config.frames,
            init.num_frames()
        )));
    }
    let rig = truncated(init, config.frames);
    let rejected = |failure: String| CalibrationReport {
        failure: Some(failure),
        ..Default::default()
    };
    let graph = match extract_correspondences(
        images,
        &rig,
        config.frames,
        matcher,
        &config.ransac,
        config.bundle.beta,
        config.seed,
    ) {
        Ok(g) => g,
        Err(e @ (Error::InsufficientData(_) | Error::DegenerateGeometry(_))) => {
            return Ok((init.clone(), rejected(e.to_string())));
        }
        Err(e) => return Err(e),
    };
    let run = |g: &CorrespondenceGraph, start: &RigCalibration| match bundle_adjust(g, start, &config.bundle) {
        Ok(r) => Ok(Ok(r)),
        Err(e @ (Error::InsufficientData(_) | Error::DegenerateGeometry(_))) => Ok(Err(e.to_string())),
        Err(e) => Err(e),
    };
    let mut result = match run(&graph, &rig)? {
        Ok(r) => r,
        Err(msg) => return Ok((init.clone(), rejected(msg))),
    };
    if let (Some(th), true) = (config.outlier_threshold_px, result.report.converged) {
        let mut pruned = graph.clone();
        pruned.landmarks = result.landmarks.clone();
        let before = pruned.observations.len();
        pruned
            .observations
            .retain(|o| observation_error(&result.calibration, &pruned.landmarks, o).is_some_and(|e| e <= th));
        pruned.compact();
        let removed = before - pruned.observations.len();
        if removed > 0 {
            // a failed refinement keeps the first result
            if let Ok(second) = run(&pruned, &result.calibration)? {
                let first = result.report;
                let max_change = max_translation_change(&rig, &second.calibration);
                let mut report = second.report;
                report.initial_rms = first.initial_rms;
                report.iterations += first.iterations;
                report.max_translation_change_m = max_change;
                report.gates.beta = first.gates.beta;
                report.gates.alpha = max_change <= config.bundle.alpha_m;
                report.accepted = report.converged && report.gates.all_pass();
                report.outliers_removed = removed;
                result = BundleResult { report, ..second };
            }
        }
    }
    let mut report = result.report;
    if !report.accepted {
        let mut fired = Vec::new();
        if !report.gates.beta {
            fired.push("beta");
        }
        if !report.gates.iterations {
            fired.push("iteration");
        }
        if !report.gates.alpha {
            fired.push("alpha");
        }
        report.failure = Some(format!("rejected by {} gate", fired.join(", ")));
        return Ok((init.clone(), report));
    }
    let mut out = init.clone();
    for (dst, src) in out.cameras.iter_mut().zip(&result.calibration.cameras) {
        dst.pose_rel = src.pose_rel;
    }
    out.front_trajectory[..config.frames].copy_from_slice(&result.calibration.front_trajectory);
    Ok((out, report))
}

fn observation_error(rig: &RigCalibration, landmarks: &[Vector3<f64>], o: &Observation) -> Option<f64> {
    let cam = &rig.cameras[o.view.camera];
    let pose = rig.front_trajectory.get(o.view.frame)?.compose(&cam.pose_rel);
    let local = pose.inverse_transform_point(&landmarks[o.landmark]);
    if local.norm() < MIN_LANDMARK_DISTANCE_M {
        return None;
    }
    let px = cam.model.project(&local).ok()?;
    Some(px.distance(&o.pixel))
}

fn max_translation_change(a: &RigCalibration, b: &RigCalibration) -> f64 {
    a.cameras
        .iter()
        .zip(&b.cameras)
        .map(|(x, y)| x.pose_rel.translation_distance(&y.pose_rel))
        .fold(0.0, f64::max)
}

/// Ablation without the loop constraint: every adjacent pair is bundle
/// adjusted on its own (the first camera of the pair acting as front
/// camera) and the relative poses are chained around the ring starting at
/// the front camera. The pair closing the loop is not used.
pub fn pairwise_bundle_adjust(
    graph: &CorrespondenceGraph,
    init: &RigCalibration,
    config: &BundleConfig,
) -> Result<RigCalibration> {
    init.validate()?;
    let ring = init.ring_indices()?;
    let front = init.front_index()?;
    let start = ring.iter().position(|&c| c == front).unwrap_or(0);
    let order: Vec<usize> = (0..ring.len()).map(|k| ring[(start + k) % ring.len()]).collect();
    let mut out = init.clone();
    let config = BundleConfig {
        scale_gauge: ScaleGauge::FrontTrajectory,
        ..*config
    };
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        let rel_a = out.cameras[a].pose_rel;
        let cam_a = &init.cameras[a];
        let cam_b = &init.cameras[b];
        let sub = RigCalibration {
            cameras: vec![
                RigCamera::new(cam_a.id.clone(), cam_a.model, Pose::identity()),
                RigCamera::new(cam_b.id.clone(), cam_b.model, rel_a.inverse().compose(&cam_b.pose_rel)),
            ],
            front_camera_id: cam_a.id.clone(),
            ring_order: vec![cam_a.id.clone(), cam_b.id.clone()],
            front_trajectory: init.front_trajectory.iter().map(|p| p.compose(&rel_a)).collect(),
            metadata: init.metadata.clone(),
        };
        let mut g = graph.restrict_to_cameras(&[a, b]);
        for o in &mut g.observations {
            o.view.camera = usize::from(o.view.camera == b);
        }
        g.pair_counts = g
            .pair_counts
            .iter()
            .map(|(p, c)| {
                let remap = |v: ViewId| ViewId::new(usize::from(v.camera == b), v.frame);
                (ViewPair::new(remap(p.a), remap(p.b)), *c)
            })
            .collect();
        if g.observations.is_empty() {
            return Err(Error::InsufficientData(format!(
                "no observations for pair {} / {}",
                cam_a.id, cam_b.id
            )));
        }
        let res = bundle_adjust(&g, &sub, &config)?;
        out.cameras[b].pose_rel = rel_a.compose(&res.calibration.cameras[1].pose_rel);
    }
    Ok(out)
}

/// Mean rotation error (radians) and mean translation error (meters) of
/// the relative poses of `est` against `truth`, over non-front cameras.
pub fn relative_pose_error(est: &RigCalibration, truth: &RigCalibration) -> Result<(f64, f64)> {
    let front = truth.front_index()?;
    let mut rot = 0.0;
    let mut trans = 0.0;
    let mut n = 0;
    for (i, cam) in truth.cameras.iter().enumerate() {
        if i == front {
            continue;
        }
        let e = est.camera(&cam.id)?;
        rot += e.pose_rel.rotation_angle_to(&cam.pose_rel);
        trans += e.pose_rel.translation_distance(&cam.pose_rel);
        n += 1;
    }
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    Ok((rot / n as f64, trans / n as f64))
}
