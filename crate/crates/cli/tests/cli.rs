use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ctsd_core::pipeline_io::{DiagnosisEvalReport, PredictionsReport};
use ctsd_core::ConfusionMatrix;
use serde_json::{json, Value};

fn ctsd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctsd")).args(args).output().unwrap()
}

fn path(p: &Path) -> String {
    p.display().to_string()
}

fn error_kind(out: &Output) -> String {
    let v: Value = serde_json::from_slice(&out.stderr)
        .unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&out.stderr)));
    v["error"]["kind"].as_str().unwrap().to_owned()
}

#[test]
fn usage_errors_exit_two_and_help_exits_zero() {
    let out = ctsd(&["measure", "--manifest", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "usage");
    assert_eq!(ctsd(&["--help"]).status.code(), Some(0));
    assert_eq!(ctsd(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn missing_manifest_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctsd(&[
        "measure",
        "--manifest",
        &path(&dir.path().join("nope.json")),
        "-o",
        &path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn synth_refuses_a_non_empty_directory_without_force() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("keep.txt"), "x").unwrap();
    let d = path(dir.path());
    let out = ctsd(&["synth", "-o", &d, "--cts", "1", "--normal", "1", "--frames", "4"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "output_not_empty");
    assert!(dir.path().join("keep.txt").exists());
    let out = ctsd(&[
        "synth", "-o", &d, "--cts", "1", "--normal", "1", "--frames", "4", "--force",
    ]);
    assert!(out.status.success());
    assert!(!dir.path().join("keep.txt").exists());
}

#[test]
fn zero_threshold_labels_every_video_cts() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| path(&dir.path().join(n));
    let manifest = p("data/manifest.json");
    assert!(ctsd(&[
        "synth",
        "-o",
        &p("data"),
        "--cts",
        "10",
        "--normal",
        "10",
        "--frames",
        "8",
        "--no-pred"
    ])
    .status
    .success());
    let out = ctsd(&[
        "train",
        "--manifest",
        &manifest,
        "-o",
        &p("model.json"),
        "--trees",
        "15",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = ctsd(&[
        "diagnose",
        "--manifest",
        &manifest,
        "--model",
        &p("model.json"),
        "--threshold",
        "0",
        "--split",
        "all",
        "-o",
        &p("pred.json"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: PredictionsReport = serde_json::from_str(&fs::read_to_string(p("pred.json")).unwrap()).unwrap();
    assert_eq!(report.predictions.len(), 20);
    assert!(report.predictions.iter().all(|e| e.predicted_label == Some(1)));

    let out = ctsd(&[
        "diagnose",
        "--manifest",
        &manifest,
        "--model",
        &p("model.json"),
        "--threshold",
        "1.5",
        "-o",
        &p("x.json"),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

/// A manifest with 40 CTS and 90 normal videos, each pointing at an empty directory.
fn labelled_manifest(root: &Path) -> String {
    let videos: Vec<Value> = (0..130)
        .map(|i| {
            let dir = format!("v{i:03}");
            fs::create_dir_all(root.join(&dir)).unwrap();
            json!({"id": dir, "frames_dir": dir, "mm_per_px_x": 0.08, "mm_per_px_y": 0.08,
                   "label": u8::from(i < 40), "split": "test"})
        })
        .collect();
    let path = root.join("manifest.json");
    fs::write(&path, json!({"schema_version": 1, "videos": videos}).to_string()).unwrap();
    path.display().to_string()
}

fn injected_predictions(root: &Path, predicted: impl Fn(usize) -> u8) -> String {
    let predictions: Vec<Value> = (0..130)
        .map(|i| {
            let y = predicted(i);
            json!({"id": format!("v{i:03}"), "split": "test", "status": "ok", "features": null,
                   "probability": if y == 1 { 0.9 } else { 0.1 }, "predicted_label": y})
        })
        .collect();
    let report = json!({"schema_version": 1, "model_sha256": "0", "classifier": "random_forest", "threshold": 0.5,
        "source": "gt", "feature_names": [], "feature_importances": null, "hyperparams": {}, "predictions": predictions});
    let path = root.join("pred.json");
    fs::write(&path, report.to_string()).unwrap();
    path.display().to_string()
}

#[test]
fn injected_predictions_reproduce_the_best_table_row() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = labelled_manifest(dir.path());
    // 34 of 40 CTS found, 2 of 90 normals flagged
    let preds = injected_predictions(dir.path(), |i| u8::from(i < 34 || (40..42).contains(&i)));
    let out_path = dir.path().join("eval.json");
    let out = ctsd(&[
        "eval-diagnosis",
        "--predictions",
        &preds,
        "--manifest",
        &manifest,
        "-o",
        &path(&out_path),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: DiagnosisEvalReport = serde_json::from_str(&fs::read_to_string(out_path).unwrap()).unwrap();
    assert_eq!(
        r.confusion,
        ConfusionMatrix {
            tp: 34,
            fp: 2,
            tn: 88,
            fn_: 6
        }
    );
    let pct = |v: f64| (v * 10000.0).round() / 100.0;
    let m = &r.metrics;
    assert_eq!(
        [
            pct(m.acc),
            pct(m.sen.unwrap()),
            pct(m.spe.unwrap()),
            pct(m.f1.unwrap()),
            pct(m.fnr.unwrap()),
            pct(m.fpr.unwrap())
        ],
        [93.85, 85.0, 97.78, 89.47, 15.0, 2.22]
    );
}

#[test]
fn unlabelled_video_in_predictions_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = labelled_manifest(dir.path());
    let text = fs::read_to_string(&manifest).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["videos"][0].as_object_mut().unwrap().remove("label");
    fs::write(&manifest, v.to_string()).unwrap();
    let preds = injected_predictions(dir.path(), |i| u8::from(i < 40));
    let out = ctsd(&["eval-diagnosis", "--predictions", &preds, "--manifest", &manifest]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "missing_label");
}
