//! Persisted classifiers. Floats are written with full round-trip precision so
//! a reloaded model predicts bit-identically.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{write_file, PipelineIoError};
use crate::diagnosis::{Classifier, DiagnosisError, LinearModel, RandomForestModel};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "classifier", rename_all = "snake_case")]
pub enum SavedModel {
    RandomForest(RandomForestModel<f64>),
    Linear(LinearModel<f64>),
}

impl SavedModel {
    pub fn feature_names(&self) -> &[String] {
        match self {
            SavedModel::RandomForest(m) => &m.feature_names,
            SavedModel::Linear(m) => &m.feature_names,
        }
    }

    pub fn as_classifier(&self) -> &dyn Classifier<f64> {
        match self {
            SavedModel::RandomForest(m) => m,
            SavedModel::Linear(m) => m,
        }
    }

    pub fn predict_proba(&self, features: &[f64]) -> Result<f64, DiagnosisError> {
        self.as_classifier().predict_proba(features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    /// Training settings echoed for provenance; not read back by predictions.
    pub hyperparams: Value,
    pub model: SavedModel,
}

impl ModelFile {
    pub fn new(model: SavedModel, hyperparams: Value) -> Self {
        ModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            hyperparams,
            model,
        }
    }
}

/// Canonical serialisation; the bytes written by [`save_model`].
pub fn model_to_json(model: &ModelFile) -> String {
    let mut text = serde_json::to_string_pretty(model).expect("model serialisation is infallible");
    text.push('\n');
    text
}

pub fn save_model(model: &ModelFile, path: &Path) -> Result<(), PipelineIoError> {
    write_file(path, model_to_json(model).as_bytes())
}

pub fn parse_model(text: &str) -> Result<ModelFile, PipelineIoError> {
    let value: Value = serde_json::from_str(text).map_err(|e| PipelineIoError::schema("", e.to_string()))?;
    let version = value
        .get("schema_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| PipelineIoError::schema("/schema_version", "expected a positive integer"))?;
    if version == 0 || version > MODEL_SCHEMA_VERSION as u64 {
        return Err(PipelineIoError::schema(
            "/schema_version",
            format!("unsupported version {version} (reader supports {MODEL_SCHEMA_VERSION})"),
        ));
    }
    serde_json::from_value(value).map_err(|e| PipelineIoError::schema("/model", e.to_string()))
}

pub fn load_model(path: &Path) -> Result<ModelFile, PipelineIoError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineIoError::io(path, e))?;
    parse_model(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnosis::LinearKind;

    fn linear() -> ModelFile {
        ModelFile::new(
            SavedModel::Linear(LinearModel {
                kind: LinearKind::LinearSvm,
                feature_names: vec!["a".into(), "b".into()],
                weights: vec![0.1 + 0.2, -1.0 / 3.0],
                bias: 1e-17,
                mean: vec![std::f64::consts::PI, 2.5],
                scale: vec![1.0, 0.7],
            }),
            serde_json::json!({"c": 1.0, "max_iters": 2000}),
        )
    }

    #[test]
    fn round_trip_is_exact() {
        let m = linear();
        let back = parse_model(&model_to_json(&m)).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_json(&back), model_to_json(&m));
    }

    #[test]
    fn future_version_rejected() {
        let text = model_to_json(&linear()).replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(
            parse_model(&text),
            Err(PipelineIoError::SchemaViolation { pointer, .. }) if pointer == "/schema_version"
        ));
    }

    #[test]
    fn unknown_top_level_field_rejected() {
        let text = model_to_json(&linear()).replacen('{', "{\"extra\": 1,", 1);
        assert!(parse_model(&text).is_err());
    }
}
