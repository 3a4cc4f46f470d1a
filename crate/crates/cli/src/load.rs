//! Manifest loading and per-video measurement shared by the commands.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ctsd_core::biometrics::{aggregate_video, measure_frame, BiometricsError, InvalidFramePolicy};
use ctsd_core::pipeline_io::{load_manifest, read_mask_dir, Manifest, VideoRecord};
use ctsd_core::{BinaryMask, Calibration, DiagnosticFeatures, FrameMeasure};
use rayon::prelude::*;

use crate::{failure, MaskSource};

pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Self> {
        let manifest = load_manifest(path).with_context(|| format!("loading manifest {}", path.display()))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Dataset { root, manifest })
    }

    /// Records sorted by id, which fixes the order of every aggregate.
    pub fn sorted_videos(&self) -> Vec<&VideoRecord> {
        let mut v: Vec<&VideoRecord> = self.manifest.videos.iter().collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    }

    pub fn mask_dir(&self, rec: &VideoRecord, source: MaskSource) -> Result<PathBuf> {
        let dir = match source {
            MaskSource::Gt => rec.gt_masks_dir.as_ref(),
            MaskSource::Pred => rec.pred_masks_dir.as_ref(),
        };
        dir.map(|d| self.root.join(d)).ok_or_else(|| {
            failure(
                "missing_masks",
                format!("video {} has no {}_masks_dir", rec.id, source.name()),
            )
        })
    }

    pub fn read_masks(&self, rec: &VideoRecord, source: MaskSource) -> Result<Vec<BinaryMask>> {
        let dir = self.mask_dir(rec, source)?;
        Ok(read_mask_dir(&dir)?)
    }
}

pub fn calibration(rec: &VideoRecord) -> Result<Calibration> {
    Calibration::new(rec.mm_per_px_x, rec.mm_per_px_y)
        .map_err(|e| failure("invalid_calibration", format!("{}: {e}", rec.id)))
}

pub struct MeasuredVideo<'a> {
    pub record: &'a VideoRecord,
    pub frames: Vec<FrameMeasure>,
    pub features: Result<DiagnosticFeatures, BiometricsError>,
}

impl MeasuredVideo<'_> {
    pub fn status(&self) -> &'static str {
        match self.features {
            Ok(_) => "ok",
            Err(BiometricsError::NoValidFrames) => "no_valid_frames",
            Err(BiometricsError::InvalidFrame(_)) => "invalid_frame",
        }
    }

    pub fn features(&self) -> Option<DiagnosticFeatures> {
        self.features.as_ref().ok().copied()
    }
}

pub fn measure_masks(masks: &[BinaryMask], calib: &Calibration) -> Vec<FrameMeasure> {
    masks.iter().map(|m| measure_frame(m, calib)).collect()
}

/// Measures `videos` in parallel; results keep the input order.
pub fn measure_videos<'a>(
    ds: &Dataset,
    videos: &[&'a VideoRecord],
    source: MaskSource,
    policy: InvalidFramePolicy,
) -> Result<Vec<MeasuredVideo<'a>>> {
    videos
        .par_iter()
        .map(|&record| {
            let masks = ds.read_masks(record, source)?;
            let frames = measure_masks(&masks, &calibration(record)?);
            let features = aggregate_video(&frames, policy);
            Ok(MeasuredVideo {
                record,
                frames,
                features,
            })
        })
        .collect()
}
