//! End-to-end runs of the binary: simulate, calibrate, sweep, hybrid
//! training, triangulation and geodetic export, plus exit-code contracts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_telephoto"))
}

fn run_ok(args: &[&str]) -> Output {
    let output = bin().args(args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn scene_config_json(noise_sigma: f64, seed: u64) -> String {
    format!(
        r#"{{
  "baseline_m": 10.0,
  "focal_px": 1600.0,
  "image_size": [1920, 1080],
  "board": {{"rows": 6, "cols": 7, "square_size_m": 0.05}},
  "views": 12,
  "noise_sigma_px": {noise_sigma},
  "true_distortion": {{
    "shape": {{"radial_num_order": 3, "radial_den_order": 3, "tangential": true, "prism_order": 2, "tilt": true}},
    "coeffs": [-0.12, 0.04, 0.0, 0.0, 0.0, 0.0, 0.001, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
  }},
  "extra_warp": {{"kind": "none", "amplitude_px": 0.0, "center": 0.0, "width": 1.0}},
  "targets_m": [100.0, 500.0, 1000.0, 2500.0, 5000.0],
  "seed": {seed}
}}
"#
    )
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("telephoto-cli-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        Self(dir)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

fn simulate_scene(dir: &TempDir, noise_sigma: f64, seed: u64) {
    let config = dir.path("scene.json");
    fs::write(&config, scene_config_json(noise_sigma, seed)).unwrap();
    run_ok(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        dir.0.to_str().unwrap(),
    ]);
    for name in [
        "left_corr.json",
        "right_corr.json",
        "stereo_corr.json",
        "test_points.json",
        "targets_truth.json",
    ] {
        assert!(dir.path(name).exists(), "{name} missing");
    }
}

#[test]
fn depth_error_prints_table_value() {
    let output = run_ok(&[
        "depth-error", "--z", "5000", "--dd", "0.1", "--f", "1600", "--baseline", "10",
    ]);
    assert_eq!(String::from_utf8_lossy(&output.stdout).trim(), "156.25");
}

#[test]
fn depth_error_exact_divergence_is_domain_error() {
    let output = bin()
        .args(["depth-error", "--z", "5000", "--dd", "4", "--f", "1600", "--baseline", "10", "--exact"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("DivergentDepth"), "stderr: {stderr}");
}

#[test]
fn missing_required_flag_is_usage_error() {
    let output = bin().args(["depth-error", "--z", "5000"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "stderr: {stderr}");
}

#[test]
fn unknown_flag_is_usage_error() {
    let output = bin()
        .args(["depth-error", "--z", "1", "--dd", "1", "--f", "1", "--baseline", "1", "--bogus"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn bad_shape_is_domain_error() {
    let dir = TempDir::new("badshape");
    simulate_scene(&dir, 0.0, 31);
    let output = bin()
        .args([
            "calibrate",
            "--corr",
            dir.path("left_corr.json").to_str().unwrap(),
            "--shape",
            "pentagon",
            "--out",
            dir.path("out.json").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("ConfigError"));
}

#[test]
fn noise_free_pipeline_end_to_end() {
    let dir = TempDir::new("e2e");
    simulate_scene(&dir, 0.0, 7);

    // Calibrate both cameras; the noise-free fit must be essentially exact.
    for side in ["left", "right"] {
        let out = dir.path(&format!("{side}_calib.json"));
        run_ok(&[
            "calibrate",
            "--corr",
            dir.path(&format!("{side}_corr.json")).to_str().unwrap(),
            "--shape",
            "classical",
            "--out",
            out.to_str().unwrap(),
        ]);
        let calib: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        let rms = calib["rms_px"].as_f64().unwrap();
        assert!(rms < 1e-8, "{side} rms {rms}");
        let fx = calib["intrinsics"]["fx"].as_f64().unwrap();
        assert!((fx - 1600.0).abs() / 1600.0 < 1e-6, "{side} fx {fx}");
    }

    // Triangulate the emitted test points. Output coordinates live in the
    // shared view's target frame.
    run_ok(&[
        "triangulate",
        "--left",
        dir.path("left_calib.json").to_str().unwrap(),
        "--right",
        dir.path("right_calib.json").to_str().unwrap(),
        "--pairs",
        dir.path("test_points.json").to_str().unwrap(),
        "--out",
        dir.path("triangulated.json").to_str().unwrap(),
    ]);
    let triangulated: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path("triangulated.json")).unwrap()).unwrap();
    let points = triangulated["points"].as_array().unwrap();
    assert_eq!(points.len(), 5);

    // Truth targets, re-expressed in the board frame of the shared view:
    // world = R_b * board + c_b with R_b mapping x->X, y->-Z, z->Y and
    // c_b = (-0.15, 12, 0.125) for the 6x7/5cm board.
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path("targets_truth.json")).unwrap()).unwrap();
    for (got, want) in points.iter().zip(truth["points"].as_array().unwrap()) {
        assert_eq!(got["label"], want["label"]);
        let g = got["xyz_m"].as_array().unwrap();
        let w = want["xyz_m"].as_array().unwrap();
        let (wx, wy, wz) = (
            w[0].as_f64().unwrap(),
            w[1].as_f64().unwrap(),
            w[2].as_f64().unwrap(),
        );
        let board = [wx + 0.15, -(wz - 0.125), wy - 12.0];
        let err = (0..3)
            .map(|i| (g[i].as_f64().unwrap() - board[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        let range = (wx * wx + wy * wy + wz * wz).sqrt();
        assert!(err < 1e-4 * range, "{}: {err} m at {range} m", got["label"]);
    }

    // Geodetic export parses back as GeoJSON with [lon, lat] ordering.
    run_ok(&[
        "export-geo",
        "--points",
        dir.path("triangulated.json").to_str().unwrap(),
        "--anchor",
        "19.0,72.8,0.0,0.0",
        "--out",
        dir.path("targets.geojson").to_str().unwrap(),
    ]);
    let geojson: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path("targets.geojson")).unwrap()).unwrap();
    assert_eq!(geojson["type"], "FeatureCollection");
    assert_eq!(geojson["features"].as_array().unwrap().len(), 5);
    let coords = geojson["features"][0]["geometry"]["coordinates"]
        .as_array()
        .unwrap();
    assert!((coords[0].as_f64().unwrap() - 72.8).abs() < 0.5, "lon first");
    assert!((coords[1].as_f64().unwrap() - 19.0).abs() < 0.5, "lat second");
}

#[test]
fn sweep_writes_report_and_selects() {
    let dir = TempDir::new("sweep");
    simulate_scene(&dir, 0.0, 11);
    run_ok(&[
        "sweep",
        "--corr",
        dir.path("stereo_corr.json").to_str().unwrap(),
        "--test-points",
        dir.path("test_points.json").to_str().unwrap(),
        "--anchor",
        "19.0,72.8,0.0,0.0",
        "--out",
        dir.path("sweep.json").to_str().unwrap(),
        "--shapes",
        "classical;5,4,true,2,true",
    ]);
    let sweep: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path("sweep.json")).unwrap()).unwrap();
    let entries = sweep["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    assert_eq!(entries[0]["param_count"], 14);
    assert_eq!(entries[1]["param_count"], 17);
    let selected = sweep["selected"].as_u64().unwrap() as usize;
    assert!(selected < 2);
    assert!(entries[selected]["test_metric"].as_f64().is_some());
}

#[test]
fn train_hybrid_writes_model_usable_for_triangulation() {
    let dir = TempDir::new("hybrid");
    simulate_scene(&dir, 0.0, 13);
    run_ok(&[
        "calibrate",
        "--corr",
        dir.path("left_corr.json").to_str().unwrap(),
        "--shape",
        "extended",
        "--out",
        dir.path("left_calib.json").to_str().unwrap(),
    ]);
    run_ok(&[
        "calibrate",
        "--corr",
        dir.path("right_corr.json").to_str().unwrap(),
        "--shape",
        "extended",
        "--out",
        dir.path("right_calib.json").to_str().unwrap(),
    ]);

    // Training points in the shared view's frame, from the emitted truth.
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path("targets_truth.json")).unwrap()).unwrap();
    let test_points: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path("test_points.json")).unwrap()).unwrap();
    let points: Vec<serde_json::Value> = truth["points"]
        .as_array()
        .unwrap()
        .iter()
        .zip(test_points["pairs"].as_array().unwrap())
        .map(|(t, p)| {
            let w = t["xyz_m"].as_array().unwrap();
            let (wx, wy, wz) = (
                w[0].as_f64().unwrap(),
                w[1].as_f64().unwrap(),
                w[2].as_f64().unwrap(),
            );
            serde_json::json!({
                "world_m": [wx + 0.15, -(wz - 0.125), wy - 12.0],
                "pixel": p["left"],
            })
        })
        .collect();
    let train_file = serde_json::json!({ "view_id": "rig", "points": points });
    fs::write(
        dir.path("train_points.json"),
        serde_json::to_string_pretty(&train_file).unwrap(),
    )
    .unwrap();

    run_ok(&[
        "train-hybrid",
        "--base",
        dir.path("left_calib.json").to_str().unwrap(),
        "--points",
        dir.path("train_points.json").to_str().unwrap(),
        "--out",
        dir.path("hybrid.json").to_str().unwrap(),
        "--epochs",
        "100",
        "--seed",
        "5",
    ]);
    let hybrid: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path("hybrid.json")).unwrap()).unwrap();
    assert!(hybrid["residual_net"]["layer_sizes"].is_array());
    assert!(hybrid["inverse_net"]["layer_sizes"].is_array());
    assert_eq!(hybrid["seed"], 5);

    run_ok(&[
        "triangulate",
        "--left",
        dir.path("hybrid.json").to_str().unwrap(),
        "--right",
        dir.path("right_calib.json").to_str().unwrap(),
        "--pairs",
        dir.path("test_points.json").to_str().unwrap(),
        "--out",
        dir.path("tri_hybrid.json").to_str().unwrap(),
    ]);
    let out: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path("tri_hybrid.json")).unwrap()).unwrap();
    assert_eq!(out["points"].as_array().unwrap().len(), 5);
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = TempDir::new("determinism");
    let config = dir.path("scene.json");
    fs::write(&config, scene_config_json(0.25, 99)).unwrap();
    let out_a = dir.path("a");
    let out_b = dir.path("b");
    for out in [&out_a, &out_b] {
        run_ok(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
        ]);
    }
    for name in ["left_corr.json", "right_corr.json", "test_points.json"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }

    // Calibration outputs are also byte-stable.
    for (tag, out_dir) in [("a", &out_a), ("b", &out_b)] {
        run_ok(&[
            "calibrate",
            "--corr",
            out_dir.join("left_corr.json").to_str().unwrap(),
            "--shape",
            "classical",
            "--out",
            dir.path(&format!("calib_{tag}.json")).to_str().unwrap(),
        ]);
    }
    assert_eq!(
        fs::read(dir.path("calib_a.json")).unwrap(),
        fs::read(dir.path("calib_b.json")).unwrap()
    );
}

#[test]
fn output_files_reparse_under_their_schemas() {
    let dir = TempDir::new("schemas");
    simulate_scene(&dir, 0.1, 17);
    run_ok(&[
        "calibrate",
        "--corr",
        dir.path("left_corr.json").to_str().unwrap(),
        "--shape",
        "classical",
        "--out",
        dir.path("calib.json").to_str().unwrap(),
    ]);

    let reparse = |path: &Path| {
        let text = fs::read_to_string(path).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value
    };
    let corr = reparse(&dir.path("left_corr.json"));
    assert_eq!(corr["target"]["rows"], 6);
    assert_eq!(corr["target"]["cols"], 7);
    assert_eq!(corr["views"][0]["id"], "rig");
    assert_eq!(
        corr["views"][0]["points"].as_array().unwrap().len(),
        42
    );
    let calib = reparse(&dir.path("calib.json"));
    for key in ["intrinsics", "distortion", "poses", "rms_px", "per_view_rms_px"] {
        assert!(!calib[key].is_null(), "missing {key}");
    }
}
