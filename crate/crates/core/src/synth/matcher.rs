use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scene::SyntheticScene;
use crate::calib::{CorrespondenceGraph, Matcher, Observation, View, ViewId};
use crate::error::{Error, Result};
use crate::geometry::PixelPoint;
use crate::rig::RigCalibration;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactMatcherOptions {
    /// Number of landmarks to sample.
    pub num_landmarks: usize,
    /// Gaussian pixel noise, per coordinate.
    pub noise_px: f64,
    /// Fraction of observations replaced by a wrong pixel.
    pub outlier_fraction: f64,
    /// Minimum distance of a wrong pixel from its true location.
    pub min_outlier_error_px: f64,
    /// Landmarks must be seen by at least this many distinct cameras.
    pub min_cameras: usize,
    pub seed: u64,
}

impl Default for ExactMatcherOptions {
    fn default() -> Self {
        Self {
            num_landmarks: 500,
            noise_px: 0.0,
            outlier_fraction: 0.0,
            min_outlier_error_px: 20.0,
            min_cameras: 2,
            seed: 0,
        }
    }
}

/// Ground-truth correspondences: the graph handed to calibration plus the
/// true landmark positions and per-observation outlier flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactGraph {
    /// `landmarks` hold the true positions; re-triangulate before using the
    /// graph with a perturbed rig.
    pub graph: CorrespondenceGraph,
    pub true_landmarks: Vec<Vector3<f64>>,
    /// Parallel to `graph.observations`.
    pub outlier: Vec<bool>,
}

fn mix(mut h: u64, v: u64) -> u64 {
    h ^= v
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(h << 6)
        .wrapping_add(h >> 2);
    h
}

fn wrong_pixel(rng: &mut impl Rng, truth: &PixelPoint, width: usize, height: usize, min_err: f64) -> PixelPoint {
    loop {
        let p = PixelPoint::new(
            rng.gen_range(0.0..width as f64 - 1.0),
            rng.gen_range(0.0..height as f64 - 1.0),
        );
        if p.distance(truth) >= min_err {
            return p;
        }
    }
}

/// Samples scene points seen by at least `min_cameras` distinct cameras of
/// `rig` over frames `0..frames` and records their (noisy) projections in
/// every view that sees them unoccluded. Pair counts cover adjacent camera
/// pairs only.
pub fn exact_matcher(
    scene: &SyntheticScene,
    rig: &RigCalibration,
    frames: usize,
    options: &ExactMatcherOptions,
) -> Result<ExactGraph> {
    rig.validate()?;
    if frames == 0 || frames > rig.num_frames() {
        return Err(Error::InvalidArgument(format!(
            "frames {frames} outside 1..={}",
            rig.num_frames()
        )));
    }
    if !(0.0..=1.0).contains(&options.outlier_fraction) || options.noise_px < 0.0 {
        return Err(Error::InvalidArgument(
            "noise and outlier fraction must be non-negative".into(),
        ));
    }
    let nc = rig.cameras.len();
    let poses: Vec<Vec<_>> = (0..nc)
        .map(|c| {
            (0..frames)
                .map(|t| rig.front_trajectory[t].compose(&rig.cameras[c].pose_rel))
                .collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let noise = Normal::new(0.0, options.noise_px.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut graph = CorrespondenceGraph::default();
    let mut outlier = Vec::new();
    let max_attempts = 2000 * options.num_landmarks.max(1);
    let mut attempts = 0;
    while graph.landmarks.len() < options.num_landmarks {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::InsufficientData(format!(
                "only {} of {} landmarks are visible in {} cameras",
                graph.landmarks.len(),
                options.num_landmarks,
                options.min_cameras
            )));
        }
        let c = rng.gen_range(0..nc);
        let t = rng.gen_range(0..frames);
        let model = &rig.cameras[c].model;
        let px = PixelPoint::new(
            rng.gen_range(0.0..model.width() as f64 - 1.0),
            rng.gen_range(0.0..model.height() as f64 - 1.0),
        );
        let Ok(ray) = model.pixel_ray(&px) else { continue };
        let pose = &poses[c][t];
        let Some(hit) = scene.intersect(&pose.translation, &pose.transform_vector(&ray)) else {
            continue;
        };
        let x = hit.point;
        let mut views = Vec::new();
        for (cam, cam_poses) in poses.iter().enumerate() {
            for (frame, p) in cam_poses.iter().enumerate() {
                let local = p.inverse_transform_point(&x);
                if let Some(q) = rig.cameras[cam].model.project_visible(&local) {
                    if scene.visible_from(&p.translation, &x) {
                        views.push((ViewId::new(cam, frame), q));
                    }
                }
            }
        }
        let mut cams: Vec<usize> = views.iter().map(|(v, _)| v.camera).collect();
        cams.dedup();
        if cams.len() < options.min_cameras.max(1) || views.len() < 2 {
            continue;
        }
        let id = graph.landmarks.len();
        for (view, q) in views {
            let model = &rig.cameras[view.camera].model;
            let is_outlier = options.outlier_fraction > 0.0 && rng.gen_bool(options.outlier_fraction);
            let pixel = if is_outlier {
                wrong_pixel(
                    &mut rng,
                    &q,
                    model.width(),
                    model.height(),
                    options.min_outlier_error_px,
                )
            } else if options.noise_px > 0.0 {
                PixelPoint::new(q.u + noise.sample(&mut rng), q.v + noise.sample(&mut rng))
            } else {
                q
            };
            graph.observations.push(Observation {
                view,
                landmark: id,
                pixel,
            });
            outlier.push(is_outlier);
        }
        graph.landmarks.push(x);
    }
    let adjacent = rig.adjacent_pairs()?;
    graph.recount_pairs(|a, b| adjacent.iter().any(|&(x, y)| (x, y) == (a, b) || (y, x) == (a, b)));
    Ok(ExactGraph {
        true_landmarks: graph.landmarks.clone(),
        graph,
        outlier,
    })
}

/// Pairwise matcher backed by an [`ExactGraph`]: returns the projections of
/// every landmark both views observe. Noise is fixed per observation, so the
/// same landmark yields the same pixel in every pair and tracks merge. Outliers
/// are drawn independently per pair from a seed derived from the pair.
#[derive(Debug, Clone)]
pub struct ExactMatcher {
    by_view: BTreeMap<ViewId, BTreeMap<usize, PixelPoint>>,
    sizes: Vec<(usize, usize)>,
    outlier_fraction: f64,
    min_outlier_error_px: f64,
    seed: u64,
}

impl ExactMatcher {
    /// Builds the landmark set with `options` but without outliers; outliers
    /// are injected per pair at match time.
    pub fn new(
        scene: &SyntheticScene,
        rig: &RigCalibration,
        frames: usize,
        options: &ExactMatcherOptions,
    ) -> Result<Self> {
        let clean = ExactMatcherOptions {
            outlier_fraction: 0.0,
            ..*options
        };
        let exact = exact_matcher(scene, rig, frames, &clean)?;
        let mut by_view: BTreeMap<ViewId, BTreeMap<usize, PixelPoint>> = BTreeMap::new();
        for o in &exact.graph.observations {
            by_view.entry(o.view).or_default().insert(o.landmark, o.pixel);
        }
        Ok(Self {
            by_view,
            sizes: rig
                .cameras
                .iter()
                .map(|c| (c.model.width(), c.model.height()))
                .collect(),
            outlier_fraction: options.outlier_fraction,
            min_outlier_error_px: options.min_outlier_error_px,
            seed: options.seed,
        })
    }
}

impl Matcher for ExactMatcher {
    fn match_pair(&self, a: &View<'_>, b: &View<'_>) -> Result<Vec<(PixelPoint, PixelPoint)>> {
        let (Some(la), Some(lb)) = (self.by_view.get(&a.id), self.by_view.get(&b.id)) else {
            return Ok(Vec::new());
        };
        let &(w, h) = self
            .sizes
            .get(b.id.camera)
            .ok_or_else(|| Error::NotFound(format!("camera index {}", b.id.camera)))?;
        let seed = [a.id.camera, a.id.frame, b.id.camera, b.id.frame]
            .iter()
            .fold(self.seed, |h, v| mix(h, *v as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for (id, pa) in la {
            if let Some(pb) = lb.get(id) {
                let pb = if self.outlier_fraction > 0.0 && rng.gen_bool(self.outlier_fraction) {
                    wrong_pixel(&mut rng, pb, w, h, self.min_outlier_error_px)
                } else {
                    *pb
                };
                out.push((*pa, pb));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{PresetOptions, RigPreset};

    fn setup() -> crate::synth::SyntheticRig {
        RigPreset::Ring6Pinhole
            .build(&PresetOptions {
                frames: 3,
                ..Default::default()
            })
            .unwrap()
    }

    #[test]
    fn noiseless_graph_reprojects_exactly() {
        let s = setup();
        let opts = ExactMatcherOptions {
            num_landmarks: 100,
            ..Default::default()
        };
        let g = exact_matcher(&s.scene, &s.rig, 3, &opts).unwrap();
        g.graph.validate().unwrap();
        assert_eq!(g.graph.num_landmarks(), 100);
        assert!(g.graph.reprojection_rms(&s.rig).unwrap() < 1e-9);
        assert!(!g.graph.pair_counts.is_empty());
        for p in g.graph.pair_counts.keys() {
            assert_ne!(p.a.camera, p.b.camera);
        }
    }

    #[test]
    fn outliers_are_far_from_truth() {
        let s = setup();
        let opts = ExactMatcherOptions {
            num_landmarks: 100,
            outlier_fraction: 0.5,
            ..Default::default()
        };
        let g = exact_matcher(&s.scene, &s.rig, 3, &opts).unwrap();
        let frac = g.outlier.iter().filter(|o| **o).count() as f64 / g.outlier.len() as f64;
        assert!((frac - 0.5).abs() < 0.1, "{frac}");
        for (o, bad) in g.graph.observations.iter().zip(&g.outlier) {
            let cam = &s.rig.cameras[o.view.camera];
            let pose = s.rig.front_trajectory[o.view.frame].compose(&cam.pose_rel);
            let q = cam
                .model
                .project(&pose.inverse_transform_point(&g.true_landmarks[o.landmark]))
                .unwrap();
            if *bad {
                assert!(q.distance(&o.pixel) >= 20.0);
            } else {
                assert!(q.distance(&o.pixel) < 1e-9);
            }
        }
    }

    #[test]
    fn pair_matches_are_seeded_and_consistent() {
        let s = setup();
        let opts = ExactMatcherOptions {
            num_landmarks: 80,
            noise_px: 0.5,
            outlier_fraction: 0.3,
            seed: 3,
            ..Default::default()
        };
        let m = ExactMatcher::new(&s.scene, &s.rig, 3, &opts).unwrap();
        let va = View {
            id: ViewId::new(0, 0),
            image: None,
        };
        let vb = View {
            id: ViewId::new(1, 1),
            image: None,
        };
        let x = m.match_pair(&va, &vb).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, m.match_pair(&va, &vb).unwrap());
        let m2 = ExactMatcher::new(&s.scene, &s.rig, 3, &opts).unwrap();
        assert_eq!(x, m2.match_pair(&va, &vb).unwrap());
    }
}
