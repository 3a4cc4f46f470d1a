use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use ctsd_core::biometrics::InvalidFramePolicy;
use ctsd_core::class_eval::{auc, confusion, report, roc_curve};
use ctsd_core::diagnosis::{
    rf_feature_importance, train_linear_svm, train_logistic_regression, train_random_forest, DiagnosisError, LrParams,
    MaxFeatures, RfHyperparams, SvmParams,
};
use ctsd_core::pipeline_io::{
    load_model, model_to_json, report_to_string, save_model, write_report, DatasetMeasureReport, DiagnosisEvalReport,
    FeatureRow, FrameEntry, FrameSegEntry, MeanStd, ModelFile, PredictionEntry, PredictionsReport, SavedModel,
    SegEvalReport, Split, VideoReport, VideoSegEntry, REPORT_SCHEMA_VERSION,
};
use ctsd_core::seg_eval::{dice, iou, score_masks};
use ctsd_core::synth::{gen_dataset, PredictionNoise, SynthDatasetSpec};
use ctsd_core::{Calibration, DiagnosticFeatures, FeatureMatrix, FEATURE_NAMES};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::load::{calibration, measure_masks, measure_videos, Dataset, MeasuredVideo};
use crate::{
    failure, ClassifierKind, Command, DiagnoseArgs, EvalDiagnosisArgs, EvalSegArgs, MaskSource, MeasureArgs, Policy,
    SplitSel, SynthArgs, TrainArgs,
};

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Measure(a) => measure(a),
        Command::EvalSeg(a) => eval_seg(a),
        Command::Train(a) => train(a),
        Command::Diagnose(a) => diagnose(a),
        Command::EvalDiagnosis(a) => eval_diagnosis(a),
    }
}

fn print_json<S: Serialize>(value: &S) -> Result<()> {
    print!("{}", report_to_string(value)?);
    Ok(())
}

fn warn(kind: &str, message: String) {
    eprintln!("{}", json!({ "warning": { "kind": kind, "message": message } }));
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn check_threshold(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(failure("usage", format!("--threshold must lie in [0, 1], got {t}")))
    }
}

fn diagnosis_failure(e: DiagnosisError) -> anyhow::Error {
    let kind = match e {
        DiagnosisError::InvalidHyperparams(_) | DiagnosisError::InvalidThreshold(_) => "usage",
        DiagnosisError::SingleClass => "single_class",
        DiagnosisError::FeatureCountMismatch { .. } => "feature_mismatch",
        _ => "diagnosis",
    };
    failure(kind, e.to_string())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec = SynthDatasetSpec {
        n_cts: a.cts,
        n_normal: a.normal,
        seed: a.seed,
        n_frames: a.frames,
        image_size: (a.size, a.size),
        mm_per_px: a.mm_per_px,
        ..SynthDatasetSpec::default()
    };
    if a.no_pred {
        spec.prediction = None;
    } else if let Some(d) = a.dropout {
        spec.prediction = Some(PredictionNoise {
            dropout: d,
            ..PredictionNoise::default()
        });
    }
    spec.validate().map_err(|e| failure("usage", e.to_string()))?;

    let occupied = fs::read_dir(&a.out).map(|mut d| d.next().is_some()).unwrap_or(false);
    if occupied {
        if !a.force {
            return Err(failure(
                "output_not_empty",
                format!("{} is not empty; pass --force to replace it", a.out.display()),
            ));
        }
        fs::remove_dir_all(&a.out).with_context(|| format!("clearing {}", a.out.display()))?;
    }
    let manifest = gen_dataset(&spec, &a.out)?;
    print_json(&json!({
        "command": "synth",
        "manifest": a.out.join("manifest.json"),
        "n_videos": manifest.videos.len(),
        "seed": spec.seed,
    }))
}

fn policy(p: Policy) -> (InvalidFramePolicy, &'static str) {
    match p {
        Policy::Exclude => (InvalidFramePolicy::Exclude, "exclude"),
        Policy::Strict => (InvalidFramePolicy::Strict, "strict"),
    }
}

fn measure(a: &MeasureArgs) -> Result<()> {
    let ds = Dataset::load(&a.manifest)?;
    let (pol, pol_name) = policy(a.policy);
    let videos = ds.sorted_videos();
    let measured = measure_videos(&ds, &videos, a.source, pol)?;

    for m in &measured {
        let rec = m.record;
        let report = VideoReport {
            schema_version: REPORT_SCHEMA_VERSION,
            video_id: rec.id.clone(),
            source: a.source.name().into(),
            mm_per_px_x: rec.mm_per_px_x,
            mm_per_px_y: rec.mm_per_px_y,
            label: rec.label,
            status: m.status().into(),
            frames: m
                .frames
                .iter()
                .enumerate()
                .map(|(i, f)| FrameEntry::new(i, f))
                .collect(),
            features: m.features(),
            predicted_label: None,
            probability: None,
            segmentation: None,
        };
        write_report(&report, &a.out.join("videos").join(format!("{}.json", rec.id)))?;
        if let Err(e) = &m.features {
            warn(m.status(), format!("video {}: {e}", rec.id));
        }
    }
    let n_bad = measured.iter().filter(|m| m.features.is_err()).count();
    let summary = DatasetMeasureReport {
        schema_version: REPORT_SCHEMA_VERSION,
        source: a.source.name().into(),
        invalid_frame_policy: pol_name.into(),
        n_videos: measured.len(),
        n_no_valid_frames: n_bad,
        videos: measured
            .iter()
            .map(|m| FeatureRow {
                id: m.record.id.clone(),
                split: m.record.split,
                label: m.record.label,
                status: m.status().into(),
                features: m.features(),
            })
            .collect(),
    };
    write_report(&summary, &a.out.join("summary.json"))?;
    print_json(&json!({
        "command": "measure",
        "n_videos": measured.len(),
        "n_warnings": n_bad,
        "out": a.out,
    }))
}

const FRAME_KEYS: [&str; 4] = ["perimeter_mm", "csa_mm2", "ad_mm", "fr"];

struct VideoSeg {
    entry: VideoSegEntry,
    frame_errors: Vec<[f64; 4]>,
}

fn eval_seg_video(ds: &Dataset, rec: &ctsd_core::pipeline_io::VideoRecord) -> Result<VideoSeg> {
    let gt = ds.read_masks(rec, MaskSource::Gt)?;
    let pred = ds.read_masks(rec, MaskSource::Pred)?;
    if gt.len() != pred.len() {
        warn(
            "frame_count_mismatch",
            format!("video {}: {} gt frames vs {} pred frames", rec.id, gt.len(), pred.len()),
        );
        return Ok(VideoSeg {
            entry: VideoSegEntry {
                id: rec.id.clone(),
                status: "frame_count_mismatch".into(),
                frames: Vec::new(),
                feature_abs_error: None,
            },
            frame_errors: Vec::new(),
        });
    }
    let px = Calibration::unit();
    let mut frames = Vec::with_capacity(gt.len());
    for (i, (g, p)) in gt.iter().zip(&pred).enumerate() {
        let entry = match score_masks(g, p, &px) {
            Ok(s) => FrameSegEntry {
                index: i,
                dice: s.dice,
                iou: s.iou,
                hd95_px: Some(s.hd95_px),
                assd_px: Some(s.assd_px),
            },
            Err(_) => FrameSegEntry {
                index: i,
                dice: dice(g, p)?,
                iou: iou(g, p)?,
                hd95_px: None,
                assd_px: None,
            },
        };
        frames.push(entry);
    }

    let calib = calibration(rec)?;
    let gm = measure_masks(&gt, &calib);
    let pm = measure_masks(&pred, &calib);
    let frame_errors = gm
        .iter()
        .zip(&pm)
        .filter_map(|(g, p)| {
            let (g, p) = (g.morphology()?, p.morphology()?);
            Some([
                (g.perimeter_mm - p.perimeter_mm).abs(),
                (g.csa_mm2 - p.csa_mm2).abs(),
                (g.ad_mm - p.ad_mm).abs(),
                (g.fr - p.fr).abs(),
            ])
        })
        .collect();
    let policy = InvalidFramePolicy::Exclude;
    let feature_abs_error = match (
        ctsd_core::aggregate_video(&gm, policy),
        ctsd_core::aggregate_video(&pm, policy),
    ) {
        (Ok(g), Ok(p)) => Some(
            FEATURE_NAMES
                .iter()
                .zip(g.to_array().iter().zip(p.to_array()))
                .map(|(k, (g, p))| (k.to_string(), (g - p).abs()))
                .collect(),
        ),
        _ => None,
    };
    let status = if feature_abs_error.is_some() {
        "ok"
    } else {
        "no_valid_frames"
    };
    Ok(VideoSeg {
        entry: VideoSegEntry {
            id: rec.id.clone(),
            status: status.into(),
            frames,
            feature_abs_error,
        },
        frame_errors,
    })
}

fn eval_seg(a: &EvalSegArgs) -> Result<()> {
    let ds = Dataset::load(&a.manifest)?;
    let videos = ds.sorted_videos();
    let results: Vec<VideoSeg> = videos
        .par_iter()
        .map(|rec| eval_seg_video(&ds, rec))
        .collect::<Result<_>>()?;

    let all_frames: Vec<&FrameSegEntry> = results.iter().flat_map(|r| &r.entry.frames).collect();
    let collect = |f: &dyn Fn(&FrameSegEntry) -> Option<f64>| -> MeanStd {
        MeanStd::of(&all_frames.iter().filter_map(|e| f(e)).collect::<Vec<_>>())
    };
    let frame_mae: BTreeMap<String, MeanStd> = FRAME_KEYS
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let v: Vec<f64> = results
                .iter()
                .flat_map(|r| r.frame_errors.iter().map(|e| e[k]))
                .collect();
            (name.to_string(), MeanStd::of(&v))
        })
        .collect();
    let video_mae: BTreeMap<String, MeanStd> = FEATURE_NAMES
        .iter()
        .map(|name| {
            let v: Vec<f64> = results
                .iter()
                .filter_map(|r| r.entry.feature_abs_error.as_ref()?.get(*name).copied())
                .collect();
            (name.to_string(), MeanStd::of(&v))
        })
        .collect();
    let report = SegEvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        n_videos: results.len(),
        n_frames: all_frames.len(),
        dice: collect(&|e| Some(e.dice)),
        iou: collect(&|e| Some(e.iou)),
        hd95_px: collect(&|e| e.hd95_px),
        assd_px: collect(&|e| e.assd_px),
        frame_mae,
        video_mae,
        videos: results.into_iter().map(|r| r.entry).collect(),
    };
    write_report(&report, &a.out)?;
    print_json(&json!({
        "command": "eval-seg",
        "n_videos": report.n_videos,
        "n_frames": report.n_frames,
        "dice": report.dice,
        "iou": report.iou,
        "hd95_px": report.hd95_px,
        "assd_px": report.assd_px,
        "out": a.out,
    }))
}

fn parse_max_features(s: &str) -> Result<MaxFeatures> {
    match s {
        "log2" => Ok(MaxFeatures::Log2),
        "all" => Ok(MaxFeatures::All),
        n => n.parse().map(MaxFeatures::Count).map_err(|_| {
            failure(
                "usage",
                format!("--max-features expects log2, all or a count, got {n:?}"),
            )
        }),
    }
}

/// Features and labels of the measured videos usable for training or scoring.
fn labelled_matrix(measured: &[MeasuredVideo]) -> (Vec<DiagnosticFeatures>, Vec<u8>, usize) {
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = 0;
    for m in measured {
        match (m.features(), m.record.label) {
            (Some(f), Some(l)) => {
                feats.push(f);
                labels.push(l);
            }
            _ => skipped += 1,
        }
    }
    (feats, labels, skipped)
}

#[derive(Serialize)]
struct ValReport {
    n: usize,
    confusion: ctsd_core::ConfusionMatrix,
    metrics: ctsd_core::ClassificationReport,
}

#[derive(Serialize)]
struct TrainReport {
    schema_version: u32,
    classifier: &'static str,
    source: &'static str,
    model_sha256: String,
    hyperparams: Value,
    n_train: usize,
    n_train_skipped: usize,
    feature_names: Vec<String>,
    feature_importances: Option<Vec<f64>>,
    threshold: f64,
    val: Option<ValReport>,
}

fn classifier_name(kind: ClassifierKind) -> &'static str {
    match kind {
        ClassifierKind::Rf => "rf",
        ClassifierKind::Lr => "lr",
        ClassifierKind::Svm => "svm",
    }
}

fn saved_name(model: &SavedModel) -> &'static str {
    match model {
        SavedModel::RandomForest(_) => "rf",
        SavedModel::Linear(m) => match m.kind {
            ctsd_core::diagnosis::LinearKind::LogisticRegression => "lr",
            ctsd_core::diagnosis::LinearKind::LinearSvm => "svm",
        },
    }
}

fn importances(model: &SavedModel) -> Option<Vec<f64>> {
    match model {
        SavedModel::RandomForest(m) => Some(rf_feature_importance(m)),
        SavedModel::Linear(_) => None,
    }
}

fn with_meta(params: Value, classifier: &str, source: MaskSource) -> Value {
    let mut map = match params {
        Value::Object(m) => m,
        other => [("params".to_string(), other)].into_iter().collect(),
    };
    map.insert("classifier".into(), classifier.into());
    map.insert("source".into(), source.name().into());
    Value::Object(map)
}

fn train(a: &TrainArgs) -> Result<()> {
    check_threshold(a.threshold)?;
    let ds = Dataset::load(&a.manifest)?;
    let videos = ds.sorted_videos();
    let of_split = |s: Split| videos.iter().copied().filter(|v| v.split == s).collect::<Vec<_>>();
    let train_videos = of_split(Split::Train);
    let val_videos = of_split(Split::Val);
    let measured = measure_videos(&ds, &train_videos, a.source, InvalidFramePolicy::Exclude)?;
    let (feats, labels, n_skipped) = labelled_matrix(&measured);
    if feats.is_empty() {
        return Err(failure(
            "no_training_data",
            "the train split has no labelled video with valid frames",
        ));
    }
    let data = FeatureMatrix::from_features(&feats, labels).map_err(diagnosis_failure)?;

    let name = classifier_name(a.classifier);
    let (model, params) = match a.classifier {
        ClassifierKind::Rf => {
            let hp = RfHyperparams {
                n_trees: a.trees,
                max_depth: a.max_depth,
                min_samples_split: a.min_samples_split,
                min_samples_leaf: a.min_samples_leaf,
                max_features: parse_max_features(&a.max_features)?,
                seed: a.seed,
                ..RfHyperparams::default()
            };
            hp.validate().map_err(diagnosis_failure)?;
            let m = train_random_forest(&data, &hp, &FEATURE_NAMES).map_err(diagnosis_failure)?;
            (SavedModel::RandomForest(m), serde_json::to_value(&hp)?)
        }
        ClassifierKind::Lr => {
            let p = LrParams {
                l2: a.l2,
                max_iters: a.lr_iters,
                tol: a.tol,
            };
            let m = train_logistic_regression(&data, &p, &FEATURE_NAMES).map_err(diagnosis_failure)?;
            (SavedModel::Linear(m), serde_json::to_value(p)?)
        }
        ClassifierKind::Svm => {
            let p = SvmParams {
                c: a.svm_c,
                max_iters: a.svm_iters,
            };
            let m = train_linear_svm(&data, &p, &FEATURE_NAMES).map_err(diagnosis_failure)?;
            (SavedModel::Linear(m), serde_json::to_value(p)?)
        }
    };
    let hyperparams = with_meta(params, name, a.source);
    let file = ModelFile::new(model, hyperparams.clone());
    save_model(&file, &a.out)?;

    let val = if val_videos.is_empty() {
        None
    } else {
        let measured = measure_videos(&ds, &val_videos, a.source, InvalidFramePolicy::Exclude)?;
        let (feats, truth, _) = labelled_matrix(&measured);
        let clf = file.model.as_classifier();
        let pred = feats
            .iter()
            .map(|f| clf.classify(&f.to_array(), a.threshold))
            .collect::<Result<Vec<u8>, _>>()
            .map_err(diagnosis_failure)?;
        let scores = feats
            .iter()
            .map(|f| clf.predict_proba(&f.to_array()))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(diagnosis_failure)?;
        if pred.is_empty() {
            None
        } else {
            let cm = confusion(&pred, &truth)?;
            let mut metrics = report(&cm);
            metrics.auc = roc_curve(&scores, &truth).ok().map(|c| auc(&c));
            Some(ValReport {
                n: pred.len(),
                confusion: cm,
                metrics,
            })
        }
    };

    let out = TrainReport {
        schema_version: REPORT_SCHEMA_VERSION,
        classifier: name,
        source: a.source.name(),
        model_sha256: sha256_hex(model_to_json(&file).as_bytes()),
        hyperparams,
        n_train: data.n_rows(),
        n_train_skipped: n_skipped,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        feature_importances: importances(&file.model),
        threshold: a.threshold,
        val,
    };
    if let Some(path) = &a.report {
        write_report(&out, path)?;
    }
    print_json(&out)
}

fn diagnose(a: &DiagnoseArgs) -> Result<()> {
    check_threshold(a.threshold)?;
    let bytes = fs::read(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let file = load_model(&a.model)?;
    if file.model.feature_names() != FEATURE_NAMES {
        return Err(failure(
            "feature_mismatch",
            format!(
                "model features {:?} differ from pipeline features {:?}",
                file.model.feature_names(),
                FEATURE_NAMES
            ),
        ));
    }
    let ds = Dataset::load(&a.manifest)?;
    let videos: Vec<_> = ds
        .sorted_videos()
        .into_iter()
        .filter(|v| match a.split {
            SplitSel::All => true,
            SplitSel::Train => v.split == Split::Train,
            SplitSel::Val => v.split == Split::Val,
            SplitSel::Test => v.split == Split::Test,
        })
        .collect();
    let measured = measure_videos(&ds, &videos, a.source, InvalidFramePolicy::Exclude)?;
    let clf = file.model.as_classifier();
    let mut predictions = Vec::with_capacity(measured.len());
    for m in &measured {
        let features = m.features();
        let probability = match features {
            Some(f) => Some(clf.predict_proba(&f.to_array()).map_err(diagnosis_failure)?),
            None => {
                warn(
                    m.status(),
                    format!("video {} has no valid frames; no prediction", m.record.id),
                );
                None
            }
        };
        predictions.push(PredictionEntry {
            id: m.record.id.clone(),
            split: m.record.split,
            status: m.status().into(),
            features,
            probability,
            predicted_label: probability.map(|p| u8::from(p >= a.threshold)),
        });
    }
    let report = PredictionsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model_sha256: sha256_hex(&bytes),
        classifier: saved_name(&file.model).into(),
        threshold: a.threshold,
        source: a.source.name().into(),
        feature_names: file.model.feature_names().to_vec(),
        feature_importances: importances(&file.model),
        hyperparams: file.hyperparams.clone(),
        predictions,
    };
    write_report(&report, &a.out)?;
    let positives = report
        .predictions
        .iter()
        .filter(|p| p.predicted_label == Some(1))
        .count();
    print_json(&json!({
        "command": "diagnose",
        "model_sha256": report.model_sha256,
        "threshold": a.threshold,
        "n_videos": report.predictions.len(),
        "n_predicted_cts": positives,
        "out": a.out,
    }))
}

fn read_predictions(path: &Path) -> Result<PredictionsReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let report: PredictionsReport =
        serde_json::from_str(&text).map_err(|e| failure("schema_violation", format!("{}: {e}", path.display())))?;
    if report.schema_version == 0 || report.schema_version > REPORT_SCHEMA_VERSION {
        return Err(failure(
            "schema_violation",
            format!(
                "{}: unsupported schema_version {}",
                path.display(),
                report.schema_version
            ),
        ));
    }
    Ok(report)
}

fn eval_diagnosis(a: &EvalDiagnosisArgs) -> Result<()> {
    let preds = read_predictions(&a.predictions)?;
    let ds = Dataset::load(&a.manifest)?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut truth = Vec::new();
    let mut skipped = 0;
    for p in &preds.predictions {
        let (Some(score), Some(label)) = (p.probability, p.predicted_label) else {
            skipped += 1;
            continue;
        };
        let t = ds
            .manifest
            .video(&p.id)
            .and_then(|v| v.label)
            .ok_or_else(|| failure("missing_label", format!("video {} has no label in the manifest", p.id)))?;
        scores.push(score);
        labels.push(label);
        truth.push(t);
    }
    if labels.is_empty() {
        return Err(failure("no_predictions", "the predictions report has no scored video"));
    }
    let cm = confusion(&labels, &truth)?;
    let mut metrics = report(&cm);
    match roc_curve(&scores, &truth) {
        Ok(curve) => {
            metrics.auc = Some(auc(&curve));
            if let Some(path) = &a.roc {
                ctsd_core::pipeline_io::save_text(path, &curve.to_csv())?;
            }
        }
        Err(e) => warn("roc_undefined", format!("ROC not computed: {e}")),
    }
    let out = DiagnosisEvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model_sha256: preds.model_sha256.clone(),
        classifier: preds.classifier.clone(),
        hyperparams: preds.hyperparams.clone(),
        threshold: preds.threshold,
        n_evaluated: labels.len(),
        n_skipped: skipped,
        confusion: cm,
        metrics,
    };
    if let Some(path) = &a.out {
        write_report(&out, path)?;
    }
    print_json(&out)
}
