//! On-disk formats: binary PGM masks, the dataset manifest, JSON reports and
//! persisted classifier models.

mod manifest;
mod model;
mod pgm;
mod report;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

pub use manifest::{
    frame_file_name, list_frames, load_manifest, parse_manifest, read_mask_dir, save_manifest, Manifest, Split,
    VideoRecord, MANIFEST_SCHEMA_VERSION,
};
pub use model::{load_model, model_to_json, parse_model, save_model, ModelFile, SavedModel, MODEL_SCHEMA_VERSION};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm, PgmError};
pub use report::{
    report_to_string, round_significant, write_report, DatasetMeasureReport, DiagnosisEvalReport, FeatureRow,
    FrameEntry, FrameSegEntry, MeanStd, PredictionEntry, PredictionsReport, SegEvalReport, VideoReport, VideoSegEntry,
    REPORT_SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum PipelineIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Pgm {
        path: PathBuf,
        #[source]
        source: PgmError,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("schema violation at {pointer}: {reason}")]
    SchemaViolation { pointer: String, reason: String },
    #[error("missing files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingFile(Vec<PathBuf>),
}

impl PipelineIoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineIoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn schema(pointer: impl Into<String>, reason: impl Into<String>) -> Self {
        PipelineIoError::SchemaViolation {
            pointer: pointer.into(),
            reason: reason.into(),
        }
    }
}

/// Pretty JSON with full float precision and a trailing newline.
pub fn save_json_exact<S: Serialize + ?Sized>(value: &S, path: &Path) -> Result<(), PipelineIoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| PipelineIoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineIoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| PipelineIoError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| PipelineIoError::io(path, e))
}

/// Writes `text` to `path`, creating parent directories.
pub fn save_text(path: &Path, text: &str) -> Result<(), PipelineIoError> {
    write_file(path, text.as_bytes())
}
