//! Frame-level nerve morphology and its video-level diagnostic summary.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{
    chain_perimeter, feret_extents, largest_component, pixel_area, trace_contour, BinaryMask, Calibration,
};
use crate::scalar::{max_of, min_of, Scalar};

/// Column order of the diagnostic feature vector.
pub const FEATURE_NAMES: [&str; 5] = ["PR", "SR", "ADR", "MaxFR", "MaxCSA"];

/// Index of the swelling ratio in [`FEATURE_NAMES`].
pub const SR_INDEX: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BiometricsError {
    #[error("no valid frames to aggregate")]
    NoValidFrames,
    #[error("frame {0} has no segmentation (strict aggregation)")]
    InvalidFrame(usize),
}

/// Morphology of the nerve in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Morphology<T> {
    pub perimeter_mm: T,
    pub csa_mm2: T,
    /// Anteroposterior diameter: vertical (depth) extent.
    pub ad_mm: T,
    /// Horizontal extent.
    pub width_mm: T,
    /// Flattening ratio, `width_mm / ad_mm`.
    pub fr: T,
}

/// Measurement of one frame; `Invalid` when the segmentation is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrameMeasure<T> {
    Valid(Morphology<T>),
    Invalid,
}

impl<T> FrameMeasure<T> {
    pub fn is_valid(&self) -> bool {
        matches!(self, FrameMeasure::Valid(_))
    }

    pub fn morphology(&self) -> Option<&Morphology<T>> {
        match self {
            FrameMeasure::Valid(m) => Some(m),
            FrameMeasure::Invalid => None,
        }
    }
}

/// Video-level diagnostic features computed over valid frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticFeatures<T> {
    pub pr: T,
    pub sr: T,
    pub adr: T,
    pub max_fr: T,
    pub max_csa_mm2: T,
    pub n_valid_frames: usize,
    pub n_invalid_frames: usize,
}

impl<T: Scalar> DiagnosticFeatures<T> {
    /// Values in [`FEATURE_NAMES`] order.
    pub fn to_array(&self) -> [T; 5] {
        [self.pr, self.sr, self.adr, self.max_fr, self.max_csa_mm2]
    }
}

/// How frames without a segmentation are handled during aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidFramePolicy {
    /// Skip them and record how many were skipped.
    #[default]
    Exclude,
    /// Fail on the first one.
    Strict,
}

/// Measures the largest connected component of `mask`.
pub fn measure_frame<T: Scalar>(mask: &BinaryMask, calib: &Calibration<T>) -> FrameMeasure<T> {
    let Some(component) = largest_component(mask) else {
        return FrameMeasure::Invalid;
    };
    let contour = trace_contour(&component).expect("largest component is a single blob");
    let (width_mm, ad_mm) = feret_extents(&component, calib).expect("component is non-empty");
    FrameMeasure::Valid(Morphology {
        perimeter_mm: chain_perimeter(&contour, calib),
        csa_mm2: pixel_area(&component, calib),
        ad_mm,
        width_mm,
        fr: width_mm / ad_mm,
    })
}

fn ratio<T: Scalar>(values: impl Iterator<Item = T> + Clone) -> T {
    let hi = max_of(values.clone()).expect("non-empty");
    let lo = min_of(values).expect("non-empty");
    hi / lo
}

/// Max/min ratios of perimeter, CSA and AD plus maximum FR and CSA.
pub fn aggregate_video<T: Scalar>(
    frames: &[FrameMeasure<T>],
    policy: InvalidFramePolicy,
) -> Result<DiagnosticFeatures<T>, BiometricsError> {
    if policy == InvalidFramePolicy::Strict {
        if let Some(i) = frames.iter().position(|f| !f.is_valid()) {
            return Err(BiometricsError::InvalidFrame(i));
        }
    }
    let valid: Vec<&Morphology<T>> = frames.iter().filter_map(FrameMeasure::morphology).collect();
    if valid.is_empty() {
        return Err(BiometricsError::NoValidFrames);
    }
    let v = valid.iter();
    Ok(DiagnosticFeatures {
        pr: ratio(v.clone().map(|m| m.perimeter_mm)),
        sr: ratio(v.clone().map(|m| m.csa_mm2)),
        adr: ratio(v.clone().map(|m| m.ad_mm)),
        max_fr: max_of(v.clone().map(|m| m.fr)).expect("non-empty"),
        max_csa_mm2: max_of(v.map(|m| m.csa_mm2)).expect("non-empty"),
        n_valid_frames: valid.len(),
        n_invalid_frames: frames.len() - valid.len(),
    })
}
