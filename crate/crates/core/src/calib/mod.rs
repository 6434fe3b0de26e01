//! Surround-rig extrinsic calibration: correspondence extraction with
//! essential-matrix verification, track building and triangulation, and a
//! loop-constrained bundle adjustment with acceptance gates.

mod bundle;
mod graph;
mod matcher;
mod pipeline;
mod ransac;
mod triangulate;

pub use bundle::{bundle_adjust, BundleConfig, BundleResult, CalibrationReport, GateResults, ScaleGauge};
pub use graph::{merge_tracks, CorrespondenceGraph, Observation, PairMatches, ViewId, ViewPair};
pub use matcher::{Matcher, PatchMatcher, View};
pub use pipeline::{
    build_graph, calibrate_sequence, extract_correspondences, pairwise_bundle_adjust, relative_pose_error,
    triangulate_graph, verified_pair_matches, CalibrationConfig, SequenceImages, MIN_LANDMARK_DISTANCE_M,
};
pub use ransac::{
    essential_eight_point, essential_from_poses, ransac_essential, sampson_distance, EssentialFit, RansacOptions,
};
pub use triangulate::triangulate_midpoint;
