//! Cross-view depth consistency on rendered ground truth.

use surround_geom::metrics::{depth_consistency, evaluate, DepthView};
use surround_geom::synth::{render, PresetOptions, RenderOptions, RigPreset, SyntheticRig};
use surround_geom::{Error, Grid};

fn scene() -> (SyntheticRig, Vec<Grid<f64>>) {
    let s = RigPreset::Ring6Pinhole
        .build(&PresetOptions {
            frames: 1,
            size: Some((320, 192)),
            ..Default::default()
        })
        .unwrap();
    let depths = s
        .rig
        .cameras
        .iter()
        .map(|c| {
            render(
                &s.scene,
                &c.model,
                &s.rig.absolute_pose(&c.id, 0).unwrap(),
                &RenderOptions::default(),
            )
            .depth
        })
        .collect();
    (s, depths)
}

fn dep_con(s: &SyntheticRig, gts: &[Grid<f64>], a: usize, b: usize, scale_a: f64) -> surround_geom::Result<f64> {
    let pa = s.rig.absolute_pose(&s.rig.cameras[a].id, 0).unwrap();
    let pb = s.rig.absolute_pose(&s.rig.cameras[b].id, 0).unwrap();
    let scaled = gts[a].map(|z| z * scale_a);
    let va = DepthView {
        depth: &scaled,
        gt: &gts[a],
        model: &s.rig.cameras[a].model,
        pose: &pa,
    };
    let vb = DepthView {
        depth: &gts[b],
        gt: &gts[b],
        model: &s.rig.cameras[b].model,
        pose: &pb,
    };
    Ok(depth_consistency(&va, &vb)?.dep_con)
}

#[test]
fn exact_depth_is_consistent() {
    let (s, gts) = scene();
    let d = dep_con(&s, &gts, 0, 1, 1.0).unwrap();
    assert!(d.abs() < 1e-9, "{d}");
}

#[test]
fn consistency_error_grows_with_scale_offset() {
    let (s, gts) = scene();
    let mut last = 0.0;
    for scale in [1.02, 1.05, 1.1, 1.2, 1.4] {
        let d = dep_con(&s, &gts, 0, 1, scale).unwrap();
        assert!(d > last, "scale {scale}: {d} <= {last}");
        last = d;
    }
    // only camera a is off, so the warped term carries about the full offset
    let d = dep_con(&s, &gts, 0, 1, 1.1).unwrap();
    assert!(d > 0.03 && d < 0.1, "{d}");
}

#[test]
fn disjoint_frusta_are_an_error() {
    let (s, gts) = scene();
    assert!(matches!(dep_con(&s, &gts, 0, 3, 1.0), Err(Error::NoValidPixels)));
}

#[test]
fn evaluate_rejects_mismatched_sizes() {
    let a = Grid::new(4, 3, 1.0);
    let b = Grid::new(3, 4, 1.0);
    let m = Grid::new(4, 3, true);
    assert!(evaluate(&a, &b, &m, 100.0).is_err());
}
