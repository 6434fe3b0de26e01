//! End-to-end stereo priors on rendered rigs.

use surround_geom::metrics::evaluate;
use surround_geom::rig::RigCalibration;
use surround_geom::stereo::{build_all_priors, AggregationPaths, DepthPrior, PriorOptions, Sgm, SgmParams};
use surround_geom::synth::{render, PresetOptions, RenderOptions, RigPreset};
use surround_geom::virtual_pinhole::{virtual_rig, warp_to_virtual, VirtualOptions};
use surround_geom::Grid;

fn eight_paths() -> Sgm {
    Sgm {
        params: SgmParams {
            paths: AggregationPaths::Eight,
            ..Default::default()
        },
    }
}

fn render_rig(rig: &RigCalibration, scene: &surround_geom::synth::SyntheticScene) -> (Vec<Grid<f32>>, Vec<Grid<f64>>) {
    rig.cameras
        .iter()
        .map(|c| {
            let r = render(
                scene,
                &c.model,
                &rig.absolute_pose(&c.id, 0).unwrap(),
                &RenderOptions::default(),
            );
            (r.image, r.depth)
        })
        .unzip()
}

fn check(priors: &[DepthPrior], gts: &[Grid<f64>], limit: f64) {
    for (p, g) in priors.iter().zip(gts) {
        let e = evaluate(&p.depth, g, &p.valid, 200.0).unwrap();
        assert!(p.valid.fraction_true() > 0.05, "valid {}", p.valid.fraction_true());
        assert!(e.abs_rel < limit, "abs_rel {}", e.abs_rel);
    }
}

#[test]
fn pinhole_ring_priors_are_accurate() {
    let s = RigPreset::Ring6Pinhole
        .build(&PresetOptions {
            frames: 1,
            ..Default::default()
        })
        .unwrap();
    let (images, gts) = render_rig(&s.rig, &s.scene);
    let priors = build_all_priors(&s.rig, &images, 0, &eight_paths(), &PriorOptions::default()).unwrap();
    assert_eq!(priors.len(), 6);
    check(&priors, &gts, 0.05);
}

#[test]
fn fisheye_ring_priors_via_virtual_cameras() {
    let s = RigPreset::Ring4Fisheye
        .build(&PresetOptions {
            frames: 1,
            ..Default::default()
        })
        .unwrap();
    let (vrig, specs) = virtual_rig(&s.rig, &VirtualOptions::default()).unwrap();
    let (fish_images, _) = render_rig(&s.rig, &s.scene);
    let images: Vec<Grid<f32>> = specs
        .iter()
        .map(|spec| {
            let i = s.rig.camera_index(&spec.source_camera_id).unwrap();
            let cam = &s.rig.cameras[i];
            warp_to_virtual(
                &fish_images[i],
                &cam.id,
                cam.model.as_fisheye().unwrap(),
                &cam.pose_rel,
                spec,
            )
            .unwrap()
            .pixels
        })
        .collect();
    let (_, gts) = render_rig(&vrig, &s.scene);
    let priors = build_all_priors(&vrig, &images, 0, &eight_paths(), &PriorOptions::default()).unwrap();
    assert_eq!(priors.len(), 8);
    check(&priors, &gts, 0.05);
}
