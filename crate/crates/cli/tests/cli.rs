use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use surround_geom::io::{list_files, read_depth_pfm, read_ply, read_rig, write_depth_pfm};
use surround_geom::synth::{perturb_rig, PresetOptions, RigPreset};
use surround_geom::Grid;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_surround-geom"))
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth_small(out: &Path, threads: &str) -> Output {
    bin()
        .env("SURROUND_GEOM_THREADS", threads)
        .args([
            "synth",
            "--preset",
            "ring6_pinhole",
            "--frames",
            "2",
            "--noise-rot",
            "1",
            "--noise-trans",
            "0.05",
            "--seed",
            "7",
            "--width",
            "160",
            "--height",
            "96",
            "--out",
        ])
        .arg(out)
        .output()
        .unwrap()
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    for ext in ["json", "png", "pfm"] {
        for rel in list_files(dir, ext).unwrap() {
            let bytes = std::fs::read(dir.join(&rel)).unwrap();
            files.push((rel, bytes));
        }
    }
    files.sort();
    files
}

#[test]
fn synth_output_is_byte_identical_across_runs_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(synth_small(&a, "1").status.success());
    assert!(synth_small(&b, "3").status.success());
    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta.len(), 3 + 2 * 6 * 2);
    assert!(ta == tb, "outputs differ");

    // written rigs read back to the in-memory values
    let preset = RigPreset::Ring6Pinhole
        .build(&PresetOptions {
            frames: 2,
            size: Some((160, 96)),
            scene_seed: 7,
            ..Default::default()
        })
        .unwrap();
    assert_eq!(read_rig(&a.join("rig.json")).unwrap(), preset.rig);
    assert_eq!(
        read_rig(&a.join("rig_perturbed.json")).unwrap(),
        perturb_rig(&preset.rig, 1.0, 0.05, 7).unwrap()
    );
}

fn eval_abs_rel(json: &Path) -> f64 {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    v["pooled"]["abs_rel"].as_f64().unwrap()
}

#[test]
fn calibrate_prior_eval_recovers_clean_accuracy() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let data = d.join("data");
    assert!(run(&[
        "synth",
        "--preset",
        "ring6_pinhole",
        "--frames",
        "7",
        "--noise-rot",
        "1",
        "--noise-trans",
        "0.05",
        "--seed",
        "7",
        "--width",
        "320",
        "--height",
        "192",
        "--out",
        s(&data),
    ])
    .status
    .success());
    let out = run(&[
        "calibrate",
        "--rig",
        s(&data.join("rig_perturbed.json")),
        "--images",
        s(&data.join("images")),
        "--frames",
        "7",
        "--beta",
        "20",
        "--alpha",
        "0.3",
        "--matcher",
        "exact",
        "--scene",
        s(&data.join("scene.json")),
        "--truth",
        s(&data.join("rig.json")),
        "--out",
        s(&d.join("rig_opt.json")),
        "--report",
        s(&d.join("report.json")),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["accepted"], true);

    let prior_eval = |rig: &Path, name: &str| -> f64 {
        let pdir = d.join(name);
        assert!(run(&[
            "prior",
            "--rig",
            s(rig),
            "--images",
            s(&data.join("images")),
            "--frame",
            "0",
            "--out",
            s(&pdir)
        ])
        .status
        .success());
        let json = d.join(format!("{name}.json"));
        assert!(run(&[
            "eval",
            "--pred",
            s(&pdir),
            "--gt",
            s(&data.join("depth")),
            "--max-range",
            "200",
            "--json",
            s(&json)
        ])
        .status
        .success());
        eval_abs_rel(&json)
    };
    let calibrated = prior_eval(&d.join("rig_opt.json"), "opt");
    let perturbed = prior_eval(&data.join("rig_perturbed.json"), "perturbed");
    eprintln!("abs_rel calibrated {calibrated:.4} perturbed {perturbed:.4}");
    assert!(calibrated < 0.05 * 1.5);
    assert!(perturbed > calibrated);

    // point cloud of the calibrated priors
    let ply = d.join("cloud.ply");
    assert!(run(&[
        "pointcloud",
        "--rig",
        s(&d.join("rig_opt.json")),
        "--priors",
        s(&d.join("opt")),
        "--images",
        s(&data.join("images")),
        "--out",
        s(&ply),
        "--format",
        "binary",
    ])
    .status
    .success());
    let (points, _) = read_ply(&ply).unwrap();
    assert!(points.len() > 1000);
}

#[test]
fn eval_size_mismatch_is_a_domain_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (pred, gt) = (tmp.path().join("pred"), tmp.path().join("gt"));
    for dir in [&pred, &gt] {
        std::fs::create_dir_all(dir.join("cam0")).unwrap();
    }
    write_depth_pfm(&pred.join("cam0/000000.pfm"), &Grid::new(4, 3, 5.0)).unwrap();
    write_depth_pfm(&gt.join("cam0/000000.pfm"), &Grid::new(5, 3, 5.0)).unwrap();
    let out = run(&["eval", "--pred", s(&pred), "--gt", s(&gt)]);
    assert_eq!(out.status.code(), Some(1));

    // matching sizes succeed
    write_depth_pfm(&gt.join("cam0/000000.pfm"), &Grid::new(4, 3, 4.0)).unwrap();
    let json = tmp.path().join("e.json");
    assert_eq!(
        run(&["eval", "--pred", s(&pred), "--gt", s(&gt), "--json", s(&json)])
            .status
            .code(),
        Some(0)
    );
    assert!((eval_abs_rel(&json) - 0.25).abs() < 1e-6);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["synth", "--frames", "2"]).status.code(), Some(2));
    assert_eq!(
        run(&["synth", "--preset", "ring9", "--out", "x"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["calibrate", "--rig", "r.json", "--matcher", "exact", "--out", "o.json"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["prior", "--rig", "r", "--images", "i", "--out", "o", "--paths", "6"])
            .status
            .code(),
        Some(2)
    );
    let out = bin()
        .env("SURROUND_GEOM_THREADS", "many")
        .args(["eval", "--pred", "a", "--gt", "b"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_inputs_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    assert_eq!(
        run(&[
            "prior",
            "--rig",
            s(&missing),
            "--images",
            s(tmp.path()),
            "--out",
            s(tmp.path())
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn fisheye_split_writes_virtual_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, virt) = (tmp.path().join("data"), tmp.path().join("virt"));
    assert!(run(&[
        "synth",
        "--preset",
        "ring4_fisheye",
        "--frames",
        "1",
        "--width",
        "256",
        "--height",
        "256",
        "--out",
        s(&data)
    ])
    .status
    .success());
    assert!(run(&[
        "fisheye-split",
        "--rig",
        s(&data.join("rig.json")),
        "--images",
        s(&data.join("images")),
        "--scene",
        s(&data.join("scene.json")),
        "--width",
        "160",
        "--height",
        "120",
        "--out",
        s(&virt),
    ])
    .status
    .success());
    let rig = read_rig(&virt.join("rig.json")).unwrap();
    assert_eq!(rig.cameras.len(), 8);
    assert_eq!(rig.front_camera_id, "fish0_L");
    for cam in &rig.cameras {
        assert!(virt.join("images").join(&cam.id).join("000000.png").exists());
        assert!(virt.join("masks").join(&cam.id).join("000000.png").exists());
        let depth = read_depth_pfm(&virt.join("depth").join(&cam.id).join("000000.pfm")).unwrap();
        assert_eq!(depth.dims(), (160, 120));
        assert!(depth.data().iter().filter(|d| **d > 0.0).count() > 160 * 120 / 2);
    }
}
