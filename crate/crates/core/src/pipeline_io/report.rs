//! JSON reports written by the pipeline commands.
//!
//! Every float is rounded to 6 significant digits before serialisation;
//! undefined quantities are `null`. Object keys come out in a fixed order, so
//! serialising the same report twice yields identical bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

use super::{write_file, PipelineIoError, Split};
use crate::biometrics::{DiagnosticFeatures, FrameMeasure};
use crate::class_eval::{ClassificationReport, ConfusionMatrix};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// `x` rounded to 6 significant decimal digits; non-finite values pass through.
pub fn round_significant(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            *v = Number::from_f64(round_significant(x)).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with rounded floats and a trailing newline.
pub fn report_to_string<R: Serialize + ?Sized>(report: &R) -> Result<String, serde_json::Error> {
    let mut value = serde_json::to_value(report)?;
    round_value(&mut value);
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_report<R: Serialize + ?Sized>(report: &R, path: &Path) -> Result<(), PipelineIoError> {
    let text = report_to_string(report).map_err(|source| PipelineIoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write_file(path, text.as_bytes())
}

/// One frame of a [`VideoReport`]. Measurements are `null` for invalid frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub valid: bool,
    pub perimeter_mm: Option<f64>,
    pub csa_mm2: Option<f64>,
    pub ad_mm: Option<f64>,
    pub width_mm: Option<f64>,
    pub fr: Option<f64>,
}

impl FrameEntry {
    pub fn new(index: usize, measure: &FrameMeasure<f64>) -> Self {
        let m = measure.morphology();
        FrameEntry {
            index,
            valid: measure.is_valid(),
            perimeter_mm: m.map(|m| m.perimeter_mm),
            csa_mm2: m.map(|m| m.csa_mm2),
            ad_mm: m.map(|m| m.ad_mm),
            width_mm: m.map(|m| m.width_mm),
            fr: m.map(|m| m.fr),
        }
    }
}

/// Per-frame segmentation scores; distances are `null` when either mask is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSegEntry {
    pub index: usize,
    pub dice: f64,
    pub iou: f64,
    pub hd95_px: Option<f64>,
    pub assd_px: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoReport {
    pub schema_version: u32,
    pub video_id: String,
    pub source: String,
    pub mm_per_px_x: f64,
    pub mm_per_px_y: f64,
    pub label: Option<u8>,
    pub status: String,
    pub frames: Vec<FrameEntry>,
    pub features: Option<DiagnosticFeatures<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_label: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<Vec<FrameSegEntry>>,
}

/// One row of the dataset feature table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub id: String,
    pub split: Split,
    pub label: Option<u8>,
    pub status: String,
    pub features: Option<DiagnosticFeatures<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeasureReport {
    pub schema_version: u32,
    pub source: String,
    pub invalid_frame_policy: String,
    pub n_videos: usize,
    pub n_no_valid_frames: usize,
    pub videos: Vec<FeatureRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: Option<f64>,
    /// Sample standard deviation (n − 1); `null` below two values.
    pub std: Option<f64>,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
        let std = mean.filter(|_| n > 1).map(|m| {
            let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        MeanStd { mean, std, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSegEntry {
    pub id: String,
    pub status: String,
    pub frames: Vec<FrameSegEntry>,
    /// Absolute errors of the video-level features, keyed by feature name.
    pub feature_abs_error: Option<std::collections::BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegEvalReport {
    pub schema_version: u32,
    pub n_videos: usize,
    pub n_frames: usize,
    pub dice: MeanStd,
    pub iou: MeanStd,
    pub hd95_px: MeanStd,
    pub assd_px: MeanStd,
    /// Frame-level MAE of perimeter, CSA, AD and FR over frames valid in both.
    pub frame_mae: std::collections::BTreeMap<String, MeanStd>,
    /// Video-level MAE of the five diagnostic features.
    pub video_mae: std::collections::BTreeMap<String, MeanStd>,
    pub videos: Vec<VideoSegEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub id: String,
    pub split: Split,
    pub status: String,
    pub features: Option<DiagnosticFeatures<f64>>,
    pub probability: Option<f64>,
    pub predicted_label: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionsReport {
    pub schema_version: u32,
    pub model_sha256: String,
    pub classifier: String,
    pub threshold: f64,
    pub source: String,
    pub feature_names: Vec<String>,
    pub feature_importances: Option<Vec<f64>>,
    pub hyperparams: Value,
    pub predictions: Vec<PredictionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisEvalReport {
    pub schema_version: u32,
    pub model_sha256: String,
    pub classifier: String,
    pub hyperparams: Value,
    pub threshold: f64,
    pub n_evaluated: usize,
    pub n_skipped: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: ClassificationReport<f64>,
}
