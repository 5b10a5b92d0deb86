//! End-to-end checks of the command-line surface and its on-disk formats.

use std::path::Path;
use std::process::Command;

use glassgeom::camera::Camera;
use glassgeom::geom::{RigidTransform, Vec3};
use glassgeom::graycode::StackMeta;
use glassgeom::render::{PatternPlane, Scene, SensorParams, ShapeSpec, TransparentObject};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_glassgeom"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("spawn glassgeom");
    assert!(
        out.status.success(),
        "glassgeom {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn small_camera() -> Camera {
    Camera::new(96, 96, 120.0, 120.0, 47.5, 47.5, RigidTransform::identity()).unwrap()
}

fn small_scene() -> Scene {
    Scene {
        camera: small_camera(),
        plane: PatternPlane {
            distance_m: 0.8,
            scale_px_per_unit: 1.0,
            pattern: StackMeta::new(8, 256, 256).unwrap(),
            phase_offset: [0.0, 0.0],
        },
        objects: vec![TransparentObject {
            shape: ShapeSpec::SphereShell { outer_r: 0.045, thickness: 0.007 },
            pose: RigidTransform::new(nalgebra::Matrix3::identity(), Vec3::new(0.0, 0.0, 0.755)),
            ior: 1.5,
        }],
        sensor: SensorParams::default(),
        seed: 3,
    }
}

#[test]
fn gen_patterns_writes_the_stack_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("patterns");
    run_ok(&["gen-patterns", "--bits", "4", "--width", "16", "--height", "16", "--out", dir.to_str().unwrap()]);
    assert!(dir.join("stack.json").exists());
    for i in 0..10 {
        assert!(dir.join(format!("frame_{i:03}.rfg")).exists(), "frame {i} missing");
    }
    assert!(!dir.join("frame_010.rfg").exists());
}

#[test]
fn bad_arguments_exit_nonzero() {
    let out = bin().args(["decode-flow", "--obj", "/nonexistent"]).output().unwrap();
    assert!(!out.status.success());
    let out = bin()
        .args(["render", "--scene", "/nonexistent.json", "--out", "/tmp/x"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn scene_json_matches_the_documented_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("scene.json");
    small_scene().write_json(&path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    for key in ["camera", "plane", "objects", "sensor", "seed"] {
        assert!(v.get(key).is_some(), "missing top-level key {key}");
    }
    for key in ["distance_m", "scale_px_per_unit", "pattern"] {
        assert!(v["plane"].get(key).is_some(), "missing plane key {key}");
    }
    let obj = &v["objects"][0];
    for key in ["shape", "params", "pose", "ior"] {
        assert!(obj.get(key).is_some(), "missing object key {key}");
    }
    for key in ["p_fail", "grazing_deg", "noise_sigma_m"] {
        assert!(v["sensor"].get(key).is_some(), "missing sensor key {key}");
    }
}

/// The full module-CLI chain: render -> decode-flow -> flow2normal ->
/// refine-depth -> plan-grasp, on files only.
#[test]
fn module_cli_chain_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let scene = small_scene();
    let scene_path = root.join("scene.json");
    scene.write_json(&scene_path).unwrap();
    let reference_path = root.join("reference.json");
    scene.without_objects().write_json(&reference_path).unwrap();
    let cam_path = root.join("cam.json");
    scene.camera.write_json(&cam_path).unwrap();

    let obj_dir = root.join("obj");
    let ref_dir = root.join("ref");
    run_ok(&["render", "--scene", scene_path.to_str().unwrap(), "--out", obj_dir.to_str().unwrap(), "--stack"]);
    run_ok(&["render", "--scene", reference_path.to_str().unwrap(), "--out", ref_dir.to_str().unwrap(), "--stack"]);
    for name in ["gt_depth.rfg", "gt_normal.rfg", "mask.rfg", "boundary.rfg", "gt_flow.rfg", "sensor_depth.rfg", "gt_normal.png"] {
        assert!(obj_dir.join(name).exists(), "render output {name} missing");
    }

    let flow_path = root.join("flow.rfg");
    run_ok(&[
        "decode-flow",
        "--obj", obj_dir.join("stack").to_str().unwrap(),
        "--ref", ref_dir.join("stack").to_str().unwrap(),
        "--mask", obj_dir.join("mask.rfg").to_str().unwrap(),
        "--out", flow_path.to_str().unwrap(),
    ]);
    assert!(flow_path.exists());

    let normal_path = root.join("normal.rfg");
    run_ok(&[
        "flow2normal",
        "--flow", flow_path.to_str().unwrap(),
        "--mask", obj_dir.join("mask.rfg").to_str().unwrap(),
        "--camera", cam_path.to_str().unwrap(),
        "--ior", "1.5",
        "--h", "0.8",
        "--d0", "0.665",
        "--out", normal_path.to_str().unwrap(),
    ]);

    let refined_path = root.join("refined.rfg");
    let cloud_path = root.join("cloud.txt");
    run_ok(&[
        "refine-depth",
        "--depth", obj_dir.join("sensor_depth.rfg").to_str().unwrap(),
        "--mask", obj_dir.join("mask.rfg").to_str().unwrap(),
        "--boundary", obj_dir.join("boundary.rfg").to_str().unwrap(),
        "--normal", normal_path.to_str().unwrap(),
        "--camera", cam_path.to_str().unwrap(),
        "--out", refined_path.to_str().unwrap(),
        "--cloud-out", cloud_path.to_str().unwrap(),
    ]);
    let cloud_text = std::fs::read_to_string(&cloud_path).unwrap();
    let first = cloud_text.lines().next().expect("cloud has points");
    assert_eq!(first.split_whitespace().count(), 7, "cloud line format x y z nx ny nz label");

    let gripper_path = root.join("franka.json");
    std::fs::write(
        &gripper_path,
        serde_json::to_string_pretty(&glassgeom::grasp::GripperModel::default()).unwrap(),
    )
    .unwrap();
    let grasps_path = root.join("grasps.json");
    run_ok(&[
        "plan-grasp",
        "--cloud", cloud_path.to_str().unwrap(),
        "--gripper", gripper_path.to_str().unwrap(),
        "--n", "80",
        "--seed", "1",
        "--out", grasps_path.to_str().unwrap(),
    ]);
    let grasps: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&grasps_path).unwrap()).unwrap();
    assert!(grasps.get("grasps").is_some());
    if let Some(first) = grasps["grasps"].as_array().and_then(|a| a.first()) {
        assert_eq!(first["pose"].as_array().unwrap().len(), 4, "pose is a 4x4 matrix");
        assert!(first.get("opening").is_some() && first.get("energy").is_some());
    }
}

fn dataset_config_json(root: &Path) -> std::path::PathBuf {
    let config = glassgeom::harness::dataset::GenConfig {
        camera: small_camera(),
        plane: PatternPlane {
            distance_m: 0.8,
            scale_px_per_unit: 1.0,
            pattern: StackMeta::new(8, 256, 256).unwrap(),
            phase_offset: [0.0, 0.0],
        },
        min_objects: 1,
        max_objects: 2,
        lateral_extent_m: 0.05,
        families: vec![glassgeom::harness::dataset::FamilyConfig::SphereShell {
            outer_r: [0.035, 0.05],
            thickness: [0.005, 0.008],
        }],
        ..Default::default()
    };
    let path = root.join("genconfig.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn dataset_pipeline_and_evaluate_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let config_path = dataset_config_json(root);

    // dataset generation is bit-exact under a fixed seed
    let ds_a = root.join("ds_a");
    let ds_b = root.join("ds_b");
    for ds in [&ds_a, &ds_b] {
        run_ok(&[
            "gen-dataset",
            "--out", ds.to_str().unwrap(),
            "--n", "1",
            "--seed", "9",
            "--config", config_path.to_str().unwrap(),
        ]);
    }
    assert_eq!(
        std::fs::read(ds_a.join("manifest.csv")).unwrap(),
        std::fs::read(ds_b.join("manifest.csv")).unwrap()
    );
    for name in ["gt_flow.rfg", "sensor_depth.rfg", "stack/frame_000.rfg", "scene.json"] {
        assert_eq!(
            std::fs::read(ds_a.join("sample_0000").join(name)).unwrap(),
            std::fs::read(ds_b.join("sample_0000").join(name)).unwrap(),
            "dataset file {name} differs between identical-seed runs"
        );
    }

    // pipeline runs and is deterministic at the CLI level
    let sample = ds_a.join("sample_0000");
    let run1 = root.join("run1");
    let run2 = root.join("run2");
    for out in [&run1, &run2] {
        let stdout = run_ok(&[
            "pipeline",
            "--sample", sample.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
        ]);
        assert!(stdout.contains("sample_id,seed,n_objects"), "pipeline prints the results row");
    }
    assert_eq!(
        std::fs::read(run1.join("results.csv")).unwrap(),
        std::fs::read(run2.join("results.csv")).unwrap()
    );

    // re-running a suffix of the pipeline from saved intermediates
    // reproduces the pipeline's own artifacts bit by bit
    let scene = Scene::read_json(&sample.join("scene.json")).unwrap();
    let cam_path = root.join("cam.json");
    scene.camera.write_json(&cam_path).unwrap();
    let front_depth = scene.objects.iter()
        .map(|o| o.pose.translation[2] - o.vertical_support())
        .fold(f64::INFINITY, f64::min);
    let normal_redo = root.join("normal_redo.rfg");
    run_ok(&[
        "flow2normal",
        "--flow", run1.join("flow.rfg").to_str().unwrap(),
        "--mask", sample.join("mask.rfg").to_str().unwrap(),
        "--camera", cam_path.to_str().unwrap(),
        "--ior", &format!("{}", scene.objects[0].ior),
        "--h", "0.8",
        "--d0", &format!("{front_depth}"),
        "--out", normal_redo.to_str().unwrap(),
    ]);
    assert_eq!(
        std::fs::read(&normal_redo).unwrap(),
        std::fs::read(run1.join("normal.rfg")).unwrap(),
        "flow2normal from saved flow deviates from the pipeline's normal map"
    );
    let refined_redo = root.join("refined_redo.rfg");
    run_ok(&[
        "refine-depth",
        "--depth", sample.join("sensor_depth.rfg").to_str().unwrap(),
        "--mask", sample.join("mask.rfg").to_str().unwrap(),
        "--boundary", sample.join("boundary.rfg").to_str().unwrap(),
        "--normal", normal_redo.to_str().unwrap(),
        "--camera", cam_path.to_str().unwrap(),
        "--out", refined_redo.to_str().unwrap(),
    ]);
    assert_eq!(
        std::fs::read(&refined_redo).unwrap(),
        std::fs::read(run1.join("refined.rfg")).unwrap(),
        "refine-depth from saved intermediates deviates from the pipeline"
    );

    // evaluate against the sample's ground truth
    let stdout = run_ok(&[
        "evaluate",
        "--sample", sample.to_str().unwrap(),
        "--normal", run1.join("normal.rfg").to_str().unwrap(),
        "--flow", run1.join("flow.rfg").to_str().unwrap(),
        "--depth", run1.join("refined.rfg").to_str().unwrap(),
    ]);
    assert!(stdout.contains("normals: mean"));
    assert!(stdout.contains("flow RMSE"));
    assert!(stdout.contains("depth RMSE"));
}

/// A sample whose captures carry no signal fails at the decode stage, with
/// the stage named in the error.
#[test]
fn pipeline_reports_the_failing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let config_path = dataset_config_json(root);
    let ds = root.join("ds");
    run_ok(&[
        "gen-dataset",
        "--out", ds.to_str().unwrap(),
        "--n", "1",
        "--seed", "4",
        "--config", config_path.to_str().unwrap(),
    ]);
    // blank out the whole capture stack
    let sample = ds.join("sample_0000");
    let stack = sample.join("stack");
    for entry in std::fs::read_dir(&stack).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "rfg") {
            let g = glassgeom::grid::Grid2::read(&path).unwrap();
            glassgeom::grid::Grid2::zeros(g.width(), g.height(), g.channels())
                .unwrap()
                .write(&path)
                .unwrap();
        }
    }
    let out = bin()
        .args([
            "pipeline",
            "--sample", sample.to_str().unwrap(),
            "--out", root.join("run").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("decode-flow"), "stage not named: {stderr}");
}
