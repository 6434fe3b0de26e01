use surround_geom::calib::{
    bundle_adjust, calibrate_sequence, pairwise_bundle_adjust, relative_pose_error, triangulate_graph, BundleConfig,
    CalibrationConfig, SequenceImages,
};
use surround_geom::synth::{exact_matcher, perturb_rig, ExactMatcher, ExactMatcherOptions, PresetOptions, RigPreset};

fn ring6(frames: usize) -> surround_geom::synth::SyntheticRig {
    RigPreset::Ring6Pinhole
        .build(&PresetOptions {
            frames,
            ..Default::default()
        })
        .unwrap()
}

#[test]
fn noiseless_recovery_from_perturbed_init() {
    let s = ring6(7);
    let exact = exact_matcher(
        &s.scene,
        &s.rig,
        7,
        &ExactMatcherOptions {
            num_landmarks: 500,
            ..Default::default()
        },
    )
    .unwrap();
    let init = perturb_rig(&s.rig, 1.0, 0.05, 11).unwrap();
    let mut graph = exact.graph.clone();
    triangulate_graph(&mut graph, &init).unwrap();
    let t0 = std::time::Instant::now();
    let res = bundle_adjust(
        &graph,
        &init,
        &BundleConfig {
            beta: 1,
            ..Default::default()
        },
    )
    .unwrap();
    eprintln!("{:?} in {:?}", res.report, t0.elapsed());
    let (rot, trans) = relative_pose_error(&res.calibration, &s.rig).unwrap();
    let mut max_rot = 0.0f64;
    let mut max_trans = 0.0f64;
    for (a, b) in res.calibration.cameras.iter().zip(&s.rig.cameras) {
        max_rot = max_rot.max(a.pose_rel.rotation_angle_to(&b.pose_rel).to_degrees());
        max_trans = max_trans.max(a.pose_rel.translation_distance(&b.pose_rel));
    }
    eprintln!("mean {rot} {trans} max {max_rot} deg {max_trans} m");
    assert!(res.report.converged);
    assert!(max_rot < 0.05 && max_trans < 1e-3);
}

#[test]
fn noisy_rms_matches_sigma() {
    let s = ring6(7);
    let exact = exact_matcher(
        &s.scene,
        &s.rig,
        7,
        &ExactMatcherOptions {
            num_landmarks: 500,
            noise_px: 0.5,
            seed: 4,
            ..Default::default()
        },
    )
    .unwrap();
    let init = perturb_rig(&s.rig, 1.0, 0.05, 11).unwrap();
    let mut graph = exact.graph.clone();
    triangulate_graph(&mut graph, &init).unwrap();
    let res = bundle_adjust(
        &graph,
        &init,
        &BundleConfig {
            beta: 1,
            ..Default::default()
        },
    )
    .unwrap();
    eprintln!("{:?}", res.report);
    assert!(res.report.final_rms >= 0.4 && res.report.final_rms <= 0.6);
}

#[test]
fn loop_beats_pairwise() {
    let s = ring6(7);
    let mut wins = 0;
    for seed in 0..10 {
        let exact = exact_matcher(
            &s.scene,
            &s.rig,
            7,
            &ExactMatcherOptions {
                num_landmarks: 300,
                noise_px: 1.0,
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        let init = perturb_rig(&s.rig, 1.0, 0.05, 100 + seed).unwrap();
        let mut graph = exact.graph.clone();
        triangulate_graph(&mut graph, &init).unwrap();
        let cfg = BundleConfig {
            beta: 1,
            ..Default::default()
        };
        let full = bundle_adjust(&graph, &init, &cfg).unwrap().calibration;
        let pair = pairwise_bundle_adjust(&graph, &init, &cfg).unwrap();
        let (fr, ft) = relative_pose_error(&full, &s.rig).unwrap();
        let (pr, pt) = relative_pose_error(&pair, &s.rig).unwrap();
        eprintln!("seed {seed}: loop {fr:.2e} {ft:.2e} pair {pr:.2e} {pt:.2e}");
        if fr + ft < pr + pt {
            wins += 1;
        }
    }
    assert!(wins >= 9);
}

#[test]
fn pipeline_with_exact_matcher_accepts() {
    let s = ring6(7);
    let m = ExactMatcher::new(
        &s.scene,
        &s.rig,
        7,
        &ExactMatcherOptions {
            num_landmarks: 400,
            noise_px: 0.3,
            outlier_fraction: 0.2,
            ..Default::default()
        },
    )
    .unwrap();
    let init = perturb_rig(&s.rig, 1.0, 0.05, 3).unwrap();
    let cfg = CalibrationConfig {
        bundle: BundleConfig {
            beta: 8,
            ..Default::default()
        },
        ..Default::default()
    };
    let (out, report) = calibrate_sequence(&SequenceImages::empty(6, 7), &init, &m, &cfg).unwrap();
    assert!(report.accepted, "{report:?}");
    assert!(report.final_rms < 0.5, "{report:?}");
    let (r, t) = relative_pose_error(&out, &s.rig).unwrap();
    assert!(
        r.to_degrees() < 0.1 && t < 0.015,
        "rotation {} deg, translation {t} m",
        r.to_degrees()
    );
    // the outlier pass only ever removes observations and lowers the error
    let single = CalibrationConfig {
        outlier_threshold_px: None,
        ..cfg
    };
    let (_, first) = calibrate_sequence(&SequenceImages::empty(6, 7), &init, &m, &single).unwrap();
    assert_eq!(first.outliers_removed, 0);
    assert!(report.num_observations <= first.num_observations);
    assert!(report.final_rms <= first.final_rms);
}
