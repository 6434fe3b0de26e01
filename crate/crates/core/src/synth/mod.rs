//! Synthetic surround rigs with exact ground truth: textured analytic
//! scenes, a ray-casting renderer, rig presets, calibration noise and a
//! ground-truth correspondence generator.

mod matcher;
pub mod presets;
mod render;
mod scene;

pub use matcher::{exact_matcher, ExactGraph, ExactMatcher, ExactMatcherOptions};
pub use presets::{default_scene, perturb_rig, vehicle_pose, PresetOptions, RigPreset, SyntheticRig};
pub use render::{render, render_dots, RenderOptions, Rendered};
pub use scene::{Hit, Plane, Sphere, SyntheticScene, Texture};
