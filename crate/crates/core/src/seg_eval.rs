//! Segmentation quality: overlap ratios (Dice, IoU), boundary distances
//! (HD95, ASSD) and mean absolute error of paired measurement series.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{boundary_pixels, BinaryMask, Calibration, Pixel, PointSet2D};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegEvalError {
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("point set is empty")]
    EmptySet,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("series is empty")]
    EmptySeries,
}

/// Per-frame segmentation scores; distances are in calibrated units
/// (pixels under [`Calibration::unit`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegScores<T> {
    pub dice: T,
    pub iou: T,
    pub hd95_px: T,
    pub assd_px: T,
}

fn check_shape(a: &BinaryMask, b: &BinaryMask) -> Result<(), SegEvalError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(SegEvalError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ))
    }
}

/// `2|A∩B| / (|A|+|B|)`; two empty masks score 1.
pub fn dice<T: Scalar>(a: &BinaryMask, b: &BinaryMask) -> Result<T, SegEvalError> {
    check_shape(a, b)?;
    let denom = a.count() + b.count();
    if denom == 0 {
        return Ok(T::one());
    }
    Ok(T::from_count(2 * a.intersection_count(b)) / T::from_count(denom))
}

/// `|A∩B| / |A∪B|`; two empty masks score 1.
pub fn iou<T: Scalar>(a: &BinaryMask, b: &BinaryMask) -> Result<T, SegEvalError> {
    check_shape(a, b)?;
    let union = a.union_count(b);
    if union == 0 {
        return Ok(T::one());
    }
    Ok(T::from_count(a.intersection_count(b)) / T::from_count(union))
}

/// Nearest-neighbour distance from every point of `from` to the set `to`.
///
/// Direct all-pairs scan over squared calibrated distances; a single `sqrt`
/// per query point keeps the result identical to a naive reference.
pub fn directed_distances<T: Scalar>(from: &PointSet2D, to: &PointSet2D, calib: &Calibration<T>) -> Vec<T> {
    let (sx, sy) = (calib.mm_per_px_x, calib.mm_per_px_y);
    let sq = |p: &Pixel, q: &Pixel| {
        let dx = T::lit(p.col as f64 - q.col as f64) * sx;
        let dy = T::lit(p.row as f64 - q.row as f64) * sy;
        dx * dx + dy * dy
    };
    from.points
        .iter()
        .map(|p| {
            to.points
                .iter()
                .map(|q| sq(p, q))
                .fold(T::infinity(), |m, d| if d < m { d } else { m })
                .sqrt()
        })
        .collect()
}

/// Nearest-rank percentile: the `ceil(q·n)`-th smallest value, with `q` given
/// in whole percent so the rank is computed in integers.
pub fn nearest_rank_percentile<T: Scalar>(values: &mut [T], percent: usize) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let rank = ((percent * n).div_ceil(100)).clamp(1, n);
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    Some(values[rank - 1])
}

/// Symmetric 95th-percentile Hausdorff distance between two point sets.
pub fn hd95<T: Scalar>(a: &PointSet2D, b: &PointSet2D, calib: &Calibration<T>) -> Result<T, SegEvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(SegEvalError::EmptySet);
    }
    let mut ab = directed_distances(a, b, calib);
    let mut ba = directed_distances(b, a, calib);
    let h_ab = nearest_rank_percentile(&mut ab, 95).expect("non-empty");
    let h_ba = nearest_rank_percentile(&mut ba, 95).expect("non-empty");
    Ok(h_ab.max(h_ba))
}

/// Average symmetric surface distance.
pub fn assd<T: Scalar>(a: &PointSet2D, b: &PointSet2D, calib: &Calibration<T>) -> Result<T, SegEvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(SegEvalError::EmptySet);
    }
    let total: T = directed_distances(a, b, calib)
        .into_iter()
        .chain(directed_distances(b, a, calib))
        .sum();
    Ok(total / T::from_count(a.len() + b.len()))
}

/// Mean absolute error between paired series.
pub fn mae<T: Scalar>(gt: &[T], pred: &[T]) -> Result<T, SegEvalError> {
    if gt.len() != pred.len() {
        return Err(SegEvalError::LengthMismatch(gt.len(), pred.len()));
    }
    if gt.is_empty() {
        return Err(SegEvalError::EmptySeries);
    }
    let sum: T = gt.iter().zip(pred).map(|(&g, &p)| (g - p).abs()).sum();
    Ok(sum / T::from_count(gt.len()))
}

/// All four scores for a ground-truth / prediction pair, with boundary
/// distances on 4-connected boundary pixels. Fails with `EmptySet` when either
/// mask has no foreground.
pub fn score_masks<T: Scalar>(
    gt: &BinaryMask,
    pred: &BinaryMask,
    calib: &Calibration<T>,
) -> Result<SegScores<T>, SegEvalError> {
    let dice = dice(gt, pred)?;
    let iou = iou(gt, pred)?;
    let (bg, bp) = (boundary_pixels(gt), boundary_pixels(pred));
    Ok(SegScores {
        dice,
        iou,
        hd95_px: hd95(&bg, &bp, calib)?,
        assd_px: assd(&bg, &bp, calib)?,
    })
}
