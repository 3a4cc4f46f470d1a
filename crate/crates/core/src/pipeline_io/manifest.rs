//! Dataset manifest (`schema_version` 1).
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "videos": [
//!     {
//!       "id": "vid0000",
//!       "frames_dir": "videos/vid0000",
//!       "gt_masks_dir": "videos/vid0000/gt",
//!       "pred_masks_dir": "videos/vid0000/pred",
//!       "mm_per_px_x": 0.08,
//!       "mm_per_px_y": 0.08,
//!       "label": 1,
//!       "split": "train"
//!     }
//!   ]
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. `gt_masks_dir`,
//! `pred_masks_dir` and `label` are optional; any other key is rejected.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{read_pgm, save_json_exact, PipelineIoError};
use crate::raster::BinaryMask;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub id: String,
    pub frames_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt_masks_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pred_masks_dir: Option<PathBuf>,
    pub mm_per_px_x: f64,
    pub mm_per_px_y: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub videos: Vec<VideoRecord>,
}

impl Manifest {
    pub fn video(&self, id: &str) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.id == id)
    }

    /// Every path the manifest references, resolved against `root`.
    pub fn referenced_paths(&self, root: &Path) -> Vec<PathBuf> {
        self.videos
            .iter()
            .flat_map(|v| {
                std::iter::once(&v.frames_dir)
                    .chain(v.gt_masks_dir.as_ref())
                    .chain(v.pred_masks_dir.as_ref())
                    .map(|p| root.join(p))
            })
            .collect()
    }
}

const VIDEO_KEYS: [&str; 8] = [
    "id",
    "frames_dir",
    "gt_masks_dir",
    "pred_masks_dir",
    "mm_per_px_x",
    "mm_per_px_y",
    "label",
    "split",
];

fn obj<'a>(v: &'a Value, ptr: &str) -> Result<&'a Map<String, Value>, PipelineIoError> {
    v.as_object()
        .ok_or_else(|| PipelineIoError::schema(ptr, "expected an object"))
}

fn reject_unknown(map: &Map<String, Value>, allowed: &[&str], ptr: &str) -> Result<(), PipelineIoError> {
    match map.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(PipelineIoError::schema(format!("{ptr}/{k}"), "unknown field")),
        None => Ok(()),
    }
}

fn required<'a>(map: &'a Map<String, Value>, key: &str, ptr: &str) -> Result<&'a Value, PipelineIoError> {
    map.get(key)
        .ok_or_else(|| PipelineIoError::schema(format!("{ptr}/{key}"), "required field missing"))
}

fn string(v: &Value, ptr: &str) -> Result<String, PipelineIoError> {
    match v.as_str() {
        Some(s) if !s.is_empty() => Ok(s.to_string()),
        _ => Err(PipelineIoError::schema(ptr, "expected a non-empty string")),
    }
}

fn optional_path(map: &Map<String, Value>, key: &str, ptr: &str) -> Result<Option<PathBuf>, PipelineIoError> {
    match map.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => string(v, &format!("{ptr}/{key}")).map(|s| Some(PathBuf::from(s))),
    }
}

fn positive(map: &Map<String, Value>, key: &str, ptr: &str) -> Result<f64, PipelineIoError> {
    let p = format!("{ptr}/{key}");
    match required(map, key, ptr)?.as_f64() {
        Some(x) if x.is_finite() && x > 0.0 => Ok(x),
        _ => Err(PipelineIoError::schema(p, "expected a positive number")),
    }
}

fn parse_video(v: &Value, ptr: &str) -> Result<VideoRecord, PipelineIoError> {
    let map = obj(v, ptr)?;
    reject_unknown(map, &VIDEO_KEYS, ptr)?;
    let label = match map.get("label") {
        None | Some(Value::Null) => None,
        Some(l) => match l.as_u64() {
            Some(x @ (0 | 1)) => Some(x as u8),
            _ => return Err(PipelineIoError::schema(format!("{ptr}/label"), "expected 0, 1 or null")),
        },
    };
    let split_ptr = format!("{ptr}/split");
    let split = required(map, "split", ptr)?
        .as_str()
        .and_then(Split::parse)
        .ok_or_else(|| PipelineIoError::schema(&split_ptr, "expected \"train\", \"val\" or \"test\""))?;
    Ok(VideoRecord {
        id: string(required(map, "id", ptr)?, &format!("{ptr}/id"))?,
        frames_dir: PathBuf::from(string(required(map, "frames_dir", ptr)?, &format!("{ptr}/frames_dir"))?),
        gt_masks_dir: optional_path(map, "gt_masks_dir", ptr)?,
        pred_masks_dir: optional_path(map, "pred_masks_dir", ptr)?,
        mm_per_px_x: positive(map, "mm_per_px_x", ptr)?,
        mm_per_px_y: positive(map, "mm_per_px_y", ptr)?,
        label,
        split,
    })
}

/// Validates a manifest document without touching the filesystem.
pub fn parse_manifest(text: &str) -> Result<Manifest, PipelineIoError> {
    let root: Value = serde_json::from_str(text).map_err(|e| PipelineIoError::schema("", e.to_string()))?;
    let map = obj(&root, "")?;
    reject_unknown(map, &["schema_version", "videos"], "")?;
    let version = required(map, "schema_version", "")?
        .as_u64()
        .ok_or_else(|| PipelineIoError::schema("/schema_version", "expected a positive integer"))?;
    if version == 0 || version > MANIFEST_SCHEMA_VERSION as u64 {
        return Err(PipelineIoError::schema(
            "/schema_version",
            format!("unsupported version {version} (reader supports {MANIFEST_SCHEMA_VERSION})"),
        ));
    }
    let list = required(map, "videos", "")?
        .as_array()
        .ok_or_else(|| PipelineIoError::schema("/videos", "expected an array"))?;
    let mut seen = HashSet::new();
    let mut videos = Vec::with_capacity(list.len());
    for (i, v) in list.iter().enumerate() {
        let ptr = format!("/videos/{i}");
        let rec = parse_video(v, &ptr)?;
        if !seen.insert(rec.id.clone()) {
            return Err(PipelineIoError::schema(
                format!("{ptr}/id"),
                format!("duplicate video id {:?}", rec.id),
            ));
        }
        videos.push(rec);
    }
    Ok(Manifest {
        schema_version: version as u32,
        videos,
    })
}

/// Loads, validates and checks that every referenced directory exists.
pub fn load_manifest(path: &Path) -> Result<Manifest, PipelineIoError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineIoError::io(path, e))?;
    let manifest = parse_manifest(&text)?;
    let root = path.parent().unwrap_or(Path::new(""));
    let missing: Vec<PathBuf> = manifest
        .referenced_paths(root)
        .into_iter()
        .filter(|p| !p.exists())
        .collect();
    if !missing.is_empty() {
        return Err(PipelineIoError::MissingFile(missing));
    }
    Ok(manifest)
}

pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<(), PipelineIoError> {
    save_json_exact(manifest, path)
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.pgm")
}

fn frame_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".pgm")?;
    if digits.len() >= 5 && digits.bytes().all(|b| b.is_ascii_digit()) {
        digits.parse().ok()
    } else {
        None
    }
}

/// `frame_%05d.pgm` files of `dir` in frame-index order; other files are ignored.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>, PipelineIoError> {
    let mut frames: Vec<(usize, PathBuf)> = fs::read_dir(dir)
        .map_err(|e| PipelineIoError::io(dir, e))?
        .filter_map(|entry| {
            let entry = entry.ok()?;
            let idx = frame_index(entry.file_name().to_str()?)?;
            Some((idx, entry.path()))
        })
        .collect();
    frames.sort();
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

pub fn read_mask_dir(dir: &Path) -> Result<Vec<BinaryMask>, PipelineIoError> {
    list_frames(dir)?.iter().map(|p| read_pgm(p)).collect()
}
