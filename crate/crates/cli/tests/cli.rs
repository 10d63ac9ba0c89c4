use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use courtpose_cli::{cmd_overlay, read_labels, RunManifest};
use courtpose_core::data::io::{read_calibration, read_poses, write_pose_frame, PoseFrame};
use courtpose_core::triangulation::Pose3D;
use nalgebra::Point3;

fn courtpose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_courtpose")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn synth(dir: &Path, scene: &str, degradation: Option<&str>) -> Output {
    let scene_path = write(dir, "scene.toml", scene);
    let mut args = vec!["synth", "--scene", p(&scene_path), "--output-dir", p(dir)];
    let deg_path;
    if let Some(d) = degradation {
        deg_path = write(dir, "degradation.toml", d);
        args.extend(["--degradation", p(&deg_path)]);
    }
    courtpose(&args)
}

fn error_kind(out: &Output) -> String {
    let line = String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or_default().to_string();
    let record: serde_json::Value = serde_json::from_str(&line).expect("stderr ends with a JSON error record");
    record["error"].as_str().unwrap().to_string()
}

#[test]
fn synth_is_byte_identical_for_equal_seeds() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let scene = "n_persons = 4\nn_cameras = 3\nn_v = 256\nn_frames = 2\nseed = 11\n";
    let deg = "keypoint_noise_px = 1.5\nocclusion_drop_prob = 0.2\n";
    assert!(synth(a.path(), scene, Some(deg)).status.success());
    assert!(synth(b.path(), scene, Some(deg)).status.success());
    for f in ["calibration.json", "detections.jsonl", "ground_truth.jsonl", "labels.jsonl"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let labels = read_labels(&a.path().join("labels.jsonl")).unwrap();
    assert_eq!(labels.len(), 2);

    let c = tempfile::tempdir().unwrap();
    assert!(synth(c.path(), &scene.replace("seed = 11", "seed = 12"), Some(deg)).status.success());
    assert_ne!(std::fs::read(a.path().join("detections.jsonl")).unwrap(), std::fs::read(c.path().join("detections.jsonl")).unwrap());
}

#[test]
fn single_camera_scene_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth(dir.path(), "n_cameras = 1\n", None);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_kind(&out), "validation");
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_cameras"));
}

#[test]
fn unknown_scene_field_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth(dir.path(), "n_people = 3\n", None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_detection_document_succeeds_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    assert!(synth(dir.path(), "n_persons = 2\nn_cameras = 4\nn_v = 128\n", None).status.success());
    let empty = write(dir.path(), "empty.jsonl", "");
    let output = dir.path().join("poses.jsonl");
    let out = courtpose(&["run", "--calibration", p(&dir.path().join("calibration.json")), "--detections", p(&empty), "--output", p(&output)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert_eq!(std::fs::read_to_string(&output).unwrap(), "");
    let manifest: RunManifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join("poses.jsonl.manifest.json")).unwrap()).unwrap();
    assert!(manifest.frames.is_empty());
    assert_eq!(manifest.warnings.len(), 1);
}

#[test]
fn k_min_above_camera_count_warns_and_yields_no_poses() {
    let dir = tempfile::tempdir().unwrap();
    assert!(synth(dir.path(), "n_persons = 3\nn_cameras = 3\nn_v = 128\n", None).status.success());
    let config = write(dir.path(), "config.toml", "k_min = 5\n");
    let output = dir.path().join("poses.jsonl");
    let out = courtpose(&[
        "run",
        "--calibration",
        p(&dir.path().join("calibration.json")),
        "--detections",
        p(&dir.path().join("detections.jsonl")),
        "--output",
        p(&output),
        "--config",
        p(&config),
    ]);
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("k_min = 5 exceeds"), "{stderr}");
    let frames = read_poses(std::io::BufReader::new(std::fs::File::open(&output).unwrap())).unwrap();
    assert_eq!(frames.len(), 1);
    assert!(frames[0].poses.is_empty());
}

#[test]
fn run_output_does_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth(
        dir.path(),
        "n_persons = 6\nn_cameras = 4\nn_v = 256\nn_frames = 6\nseed = 5\n",
        Some("keypoint_noise_px = 1.0\nmesh_noise_px = 1.0\nocclusion_drop_prob = 0.1\n"),
    );
    assert!(out.status.success());
    let mut docs = Vec::new();
    let mut counts = Vec::new();
    for workers in ["1", "4"] {
        let output = dir.path().join(format!("poses_{workers}.jsonl"));
        let out = courtpose(&[
            "run",
            "--calibration",
            p(&dir.path().join("calibration.json")),
            "--detections",
            p(&dir.path().join("detections.jsonl")),
            "--output",
            p(&output),
            "--workers",
            workers,
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        docs.push(std::fs::read(&output).unwrap());
        let manifest: RunManifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("poses_{workers}.jsonl.manifest.json"))).unwrap()).unwrap();
        counts.push(manifest.frames.iter().map(|f| (f.frame_id, f.candidates, f.matches, f.clusters, f.poses)).collect::<Vec<_>>());
    }
    assert_eq!(docs[0], docs[1]);
    assert_eq!(counts[0], counts[1]);
    assert_eq!(String::from_utf8_lossy(&docs[0]).lines().count(), 6);
}

#[test]
fn eval_of_ground_truth_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    assert!(synth(dir.path(), "n_persons = 5\nn_cameras = 4\nn_v = 256\nn_frames = 2\n", None).status.success());
    let output = dir.path().join("poses.jsonl");
    let run = courtpose(&[
        "run",
        "--calibration",
        p(&dir.path().join("calibration.json")),
        "--detections",
        p(&dir.path().join("detections.jsonl")),
        "--output",
        p(&output),
    ]);
    assert!(run.status.success());
    let report = dir.path().join("report.json");
    let out = courtpose(&["eval", "--predictions", p(&output), "--ground-truth", p(&dir.path().join("ground_truth.jsonl")), "--report", p(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let row = String::from_utf8_lossy(&out.stdout);
    assert!(row.starts_with("Recall 100.0 | MPJPE 0.0/0.0 | PA-MPJPE 0.0/0.0 | AP@75 100.0"), "{row}");
}

#[test]
fn missing_mapping_file_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden");
    let out = courtpose(&[
        "eval",
        "--predictions",
        p(&golden.join("predictions.jsonl")),
        "--ground-truth",
        p(&golden.join("ground_truth.jsonl")),
        "--mapping",
        p(&dir.path().join("absent.json")),
        "--report",
        p(&dir.path().join("report.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "parse");
}

#[test]
fn malformed_detections_abort_unless_lenient() {
    let dir = tempfile::tempdir().unwrap();
    assert!(synth(dir.path(), "n_persons = 2\nn_cameras = 3\nn_v = 128\nn_frames = 2\n", None).status.success());
    let text = std::fs::read_to_string(dir.path().join("detections.jsonl")).unwrap();
    let broken = write(dir.path(), "broken.jsonl", &format!("{{\"frame_id\": \n{text}"));
    let output = dir.path().join("poses.jsonl");
    let cal = dir.path().join("calibration.json");
    let strict = courtpose(&["run", "--calibration", p(&cal), "--detections", p(&broken), "--output", p(&output)]);
    assert_eq!(strict.status.code(), Some(2));
    let lenient = courtpose(&["run", "--calibration", p(&cal), "--detections", p(&broken), "--output", p(&output), "--lenient"]);
    assert!(lenient.status.success());
    assert_eq!(read_poses(std::io::BufReader::new(std::fs::File::open(&output).unwrap())).unwrap().len(), 2);
}

#[test]
fn overlay_of_one_person_in_two_views() {
    let dir = tempfile::tempdir().unwrap();
    assert!(synth(dir.path(), "n_persons = 1\nn_cameras = 2\nn_v = 128\n", None).status.success());
    let poses = dir.path().join("poses.jsonl");
    let cal = dir.path().join("calibration.json");
    let config = write(dir.path(), "config.toml", "k_min = 2\n");
    let run = courtpose(&["run", "--calibration", p(&cal), "--detections", p(&dir.path().join("detections.jsonl")), "--output", p(&poses), "--config", p(&config)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let overlay = dir.path().join("overlay");
    let out = courtpose(&["overlay", "--predictions", p(&poses), "--calibration", p(&cal), "--output", p(&overlay), "--epipolar-from", "cam00"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let views: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(overlay.join("overlay.json")).unwrap()).unwrap();
    let views = views.as_array().unwrap();
    assert_eq!(views.len(), 2);
    for v in views {
        assert_eq!(v["persons"].as_array().unwrap().len(), 1);
        let joints = v["persons"][0]["joints"].as_array().unwrap();
        assert_eq!(joints.len(), 15);
        assert!(joints.iter().all(|j| !j.is_null()));
    }
    // epipolar lines are drawn only in the view that is not the reference
    assert!(views[0]["epipolar_lines"].as_array().unwrap().is_empty());
    assert_eq!(views[1]["epipolar_lines"].as_array().unwrap().len(), 15);
    for name in ["frame000000_cam00.svg", "frame000000_cam01.svg"] {
        let svg = std::fs::read_to_string(overlay.join(name)).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}

#[test]
fn unknown_epipolar_reference_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(synth(dir.path(), "n_persons = 1\nn_cameras = 2\nn_v = 128\n", None).status.success());
    let empty = write(dir.path(), "poses.jsonl", "");
    let out = courtpose(&[
        "overlay",
        "--predictions",
        p(&empty),
        "--calibration",
        p(&dir.path().join("calibration.json")),
        "--output",
        p(&dir.path().join("o")),
        "--epipolar-from",
        "nope",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn overlay_matches_projection_and_skips_persons_behind_a_camera() {
    let dir = tempfile::tempdir().unwrap();
    assert!(synth(dir.path(), "n_persons = 1\nn_cameras = 2\nn_v = 128\n", None).status.success());
    let cal = dir.path().join("calibration.json");
    let rig = read_calibration(std::fs::File::open(&cal).unwrap()).unwrap();
    let cam0 = &rig.cameras()[0];
    // a standing figure at the court center, and one three meters behind cam00
    let figure = |base: Point3<f64>| -> Pose3D {
        let joints: Vec<_> = (0..4).map(|k| base + nalgebra::Vector3::new(0.1 * k as f64, 0.0, 0.4 * k as f64)).collect();
        Pose3D { person_index: 0, joints, joint_valid: vec![true; 4], joint_inlier_count: vec![2; 4], cluster_views: vec![], post_fit_error_px: vec![None; 4] }
    };
    let behind_base = cam0.center() + (cam0.center() - Point3::new(0.0, 0.0, 1.0)).normalize() * 3.0 - nalgebra::Vector3::new(0.0, 0.0, cam0.center().z);
    let mut behind = figure(behind_base);
    behind.person_index = 1;
    let center = figure(Point3::new(0.0, 0.0, 0.1));
    let poses = dir.path().join("poses.jsonl");
    write_pose_frame(&PoseFrame { frame_id: 3, poses: vec![center.clone(), behind] }, std::fs::File::create(&poses).unwrap()).unwrap();

    let overlay = dir.path().join("overlay");
    let notes = cmd_overlay(&poses, &cal, &overlay, None).unwrap();
    assert!(notes.iter().any(|n| n.contains("person 1") && n.contains("cam00")), "{notes:?}");
    let views: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(overlay.join("overlay.json")).unwrap()).unwrap();
    let v0 = &views[0];
    assert_eq!(v0["view_id"], "cam00");
    assert_eq!(v0["persons"].as_array().unwrap().len(), 1);
    for (j, q) in center.joints.iter().enumerate() {
        let px = cam0.project(q).unwrap();
        assert_eq!(v0["persons"][0]["joints"][j][0].as_f64().unwrap(), px.x);
        assert_eq!(v0["persons"][0]["joints"][j][1].as_f64().unwrap(), px.y);
    }
}

fn committed_fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synth_small")
}

#[test]
fn generator_reproduces_the_committed_fixture() {
    let fixture = committed_fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = courtpose(&[
        "synth",
        "--scene",
        p(&fixture.join("scene.toml")),
        "--degradation",
        p(&fixture.join("degradation.toml")),
        "--output-dir",
        p(dir.path()),
    ]);
    assert!(out.status.success());
    for f in ["calibration.json", "detections.jsonl", "ground_truth.jsonl", "labels.jsonl"] {
        assert!(std::fs::read(dir.path().join(f)).unwrap() == std::fs::read(fixture.join(f)).unwrap(), "{f} drifted from the committed copy");
    }
}

#[test]
fn committed_fixture_reconstructs_every_person() {
    let fixture = committed_fixture();
    let dir = tempfile::tempdir().unwrap();
    let poses = dir.path().join("poses.jsonl");
    let config = write(dir.path(), "config.toml", "k_min = 3\n");
    let run = courtpose(&[
        "run",
        "--calibration",
        p(&fixture.join("calibration.json")),
        "--detections",
        p(&fixture.join("detections.jsonl")),
        "--output",
        p(&poses),
        "--config",
        p(&config),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report_path = dir.path().join("report.json");
    let report = courtpose_cli::cmd_eval(&poses, &fixture.join("ground_truth.jsonl"), None, &report_path, 500.0).unwrap();
    assert_eq!(report.recall_pct, Some(100.0));
    // at 800 px focal length and ~20 m range one pixel spans about 25 mm
    assert!(report.mpjpe_mean_mm.unwrap() < 60.0, "{:?}", report.mpjpe_mean_mm);
}
