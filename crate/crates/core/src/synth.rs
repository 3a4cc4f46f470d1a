//! Deterministic synthetic sweeps: rasterised elliptical nerve sections whose
//! area and flattening follow a controlled compression profile, plus mask
//! perturbations that stand in for an imperfect segmentation model.
//!
//! Every video draws from its own ChaCha8 stream keyed by `(seed, video
//! index)`, so datasets are reproducible regardless of generation order.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline_io::{
    frame_file_name, save_json_exact, save_manifest, write_pgm, Manifest, PipelineIoError, Split, VideoRecord,
    MANIFEST_SCHEMA_VERSION,
};
use crate::raster::BinaryMask;

/// Clinical SR cutoff for CTS; generated CTS videos sit at or above it.
pub const CTS_SR_CUTOFF: f64 = 1.55;
/// Upper bound (exclusive) for the SR of generated normal videos.
pub const NORMAL_SR_CEILING: f64 = 1.3;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("ellipse at ({x:.2},{y:.2}) with semi-axes ({a:.2},{b:.2}) does not fit a {w}x{h} image")]
    OutOfBounds {
        x: f64,
        y: f64,
        a: f64,
        b: f64,
        w: usize,
        h: usize,
    },
    #[error("invalid sweep profile: {0}")]
    InvalidProfile(String),
    #[error("profile infeasible: {0}")]
    ProfileInfeasible(String),
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] PipelineIoError),
}

/// Pixel `(c, r)` is foreground iff its centre lies inside the ellipse.
pub fn render_ellipse_mask(
    center: (f64, f64),
    semi_axes: (f64, f64),
    size: (usize, usize),
) -> Result<BinaryMask, SynthError> {
    let ((x, y), (a, b), (w, h)) = (center, semi_axes, size);
    let fits = a > 0.0 && b > 0.0 && x - a >= 0.0 && y - b >= 0.0 && x + a <= w as f64 && y + b <= h as f64;
    if !fits {
        return Err(SynthError::OutOfBounds { x, y, a, b, w, h });
    }
    let mut mask = BinaryMask::new(w, h).map_err(|e| SynthError::InvalidProfile(e.to_string()))?;
    let c0 = (x - a).floor().max(0.0) as usize;
    let c1 = ((x + a).ceil() as usize).min(w);
    let r0 = (y - b).floor().max(0.0) as usize;
    let r1 = ((y + b).ceil() as usize).min(h);
    for r in r0..r1 {
        let dy = (r as f64 + 0.5 - y) / b;
        for c in c0..c1 {
            let dx = (c as f64 + 0.5 - x) / a;
            if dx * dx + dy * dy <= 1.0 {
                mask.set(c, r, true);
            }
        }
    }
    Ok(mask)
}

/// Ramanujan's first approximation to the ellipse perimeter.
pub fn ramanujan_perimeter(a: f64, b: f64) -> f64 {
    PI * (3.0 * (a + b) - ((3.0 * a + b) * (a + 3.0 * b)).sqrt())
}

/// Shape of one sweep. The reference (uncompressed) section has semi-axes
/// `base_axes_px`; at the compression site the area shrinks by `csa_ratio`
/// and the flattening ratio rises to `fr_peak`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepProfile {
    pub n_frames: usize,
    /// Horizontal and vertical semi-axes of the reference section.
    pub base_axes_px: (f64, f64),
    pub csa_ratio: f64,
    /// Compression site as a fraction of the sweep, snapped to a frame.
    pub compression_center: f64,
    /// Half-width of the compression bump as a fraction of the sweep.
    pub compression_width: f64,
    pub fr_peak: f64,
    pub center_drift_px: f64,
    pub label: u8,
}

impl SweepProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidProfile(m));
        let (a, b) = self.base_axes_px;
        if self.n_frames < 3 {
            return bad(format!("n_frames {} < 3", self.n_frames));
        }
        if !(a >= 4.0 && b >= 4.0) {
            return bad(format!("semi-axes ({a}, {b}) must be >= 4 px"));
        }
        if !(self.csa_ratio >= 1.0 && self.csa_ratio.is_finite()) {
            return bad(format!("csa_ratio {} < 1", self.csa_ratio));
        }
        if !(0.0..=1.0).contains(&self.compression_center) {
            return bad("compression_center outside [0, 1]".into());
        }
        if !(self.compression_width > 0.0 && self.compression_width <= 1.0) {
            return bad("compression_width outside (0, 1]".into());
        }
        if !(self.fr_peak >= a / b && self.fr_peak.is_finite()) {
            return bad(format!("fr_peak {} below the reference ratio {}", self.fr_peak, a / b));
        }
        if self.center_drift_px.is_nan() || self.center_drift_px < 0.0 {
            return bad("center_drift_px must be >= 0".into());
        }
        if self.label > 1 {
            return bad("label must be 0 or 1".into());
        }
        Ok(())
    }

    /// Compression weight per frame: 1 at the compression frame, falling to 0
    /// (raised cosine), and exactly 0 at least at the farthest frame.
    pub fn compression_weights(&self) -> Vec<f64> {
        let last = self.n_frames - 1;
        let ic = (self.compression_center * last as f64).round() as usize;
        let reach = ic.max(last - ic) as f64;
        let half_width = (self.compression_width * last as f64).clamp(1.0, reach);
        (0..self.n_frames)
            .map(|i| {
                let u = (i as f64 - ic as f64).abs() / half_width;
                if u >= 1.0 {
                    0.0
                } else {
                    0.5 * (1.0 + (PI * u).cos())
                }
            })
            .collect()
    }
}

/// Analytic description of one generated frame (pixel units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    pub area_px: f64,
    pub fr: f64,
    pub perimeter_px: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub masks: Vec<BinaryMask>,
    pub truth: Vec<FrameTruth>,
}

impl SynthVideo {
    /// Analytic max/min area ratio.
    pub fn analytic_sr(&self) -> f64 {
        let areas = self.truth.iter().map(|t| t.area_px);
        let max = areas.clone().fold(f64::MIN, f64::max);
        let min = areas.fold(f64::MAX, f64::min);
        max / min
    }

    pub fn analytic_max_fr(&self) -> f64 {
        self.truth.iter().map(|t| t.fr).fold(f64::MIN, f64::max)
    }
}

/// Renders a sweep. Frame `i` with compression weight `g` has area
/// `A_ref · csa_ratio^(-g)` and flattening `fr_ref + (fr_peak - fr_ref)·g`,
/// centred at the image centre plus a uniform drift in `±center_drift_px`.
pub fn gen_video(profile: &SweepProfile, size: (usize, usize), seed: u64) -> Result<SynthVideo, SynthError> {
    profile.validate()?;
    let (a0, b0) = profile.base_axes_px;
    let area_ref = PI * a0 * b0;
    let fr_ref = a0 / b0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drift = profile.center_drift_px;

    let mut masks = Vec::with_capacity(profile.n_frames);
    let mut truth = Vec::with_capacity(profile.n_frames);
    for g in profile.compression_weights() {
        let area = area_ref * profile.csa_ratio.powf(-g);
        let fr = fr_ref + (profile.fr_peak - fr_ref) * g;
        let a = (area / PI * fr).sqrt();
        let b = (area / (PI * fr)).sqrt();
        let (dx, dy) = if drift > 0.0 {
            (rng.gen_range(-drift..=drift), rng.gen_range(-drift..=drift))
        } else {
            (0.0, 0.0)
        };
        let center = (size.0 as f64 / 2.0 + dx, size.1 as f64 / 2.0 + dy);
        let mask = render_ellipse_mask(center, (a, b), size).map_err(|e| match e {
            SynthError::OutOfBounds { .. } => SynthError::ProfileInfeasible(e.to_string()),
            other => other,
        })?;
        masks.push(mask);
        truth.push(FrameTruth {
            center,
            semi_axes: (a, b),
            area_px: PI * a * b,
            fr: a / b,
            perimeter_px: ramanujan_perimeter(a, b),
        });
    }
    Ok(SynthVideo { masks, truth })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    Dilate,
    Erode,
    Shift,
}

/// Explicit mask perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    Identity,
    /// Square structuring element of the given radius.
    Dilate(usize),
    Erode(usize),
    /// Integer translation; pixels leaving the image are dropped.
    Shift {
        dx: isize,
        dy: isize,
    },
}

/// Perturbation of the given mode and magnitude; a shift goes in one of the
/// eight compass directions chosen from `seed`.
pub fn perturb_mask(mask: &BinaryMask, mode: PerturbMode, magnitude: usize, seed: u64) -> BinaryMask {
    let p = match mode {
        PerturbMode::Dilate => Perturbation::Dilate(magnitude),
        PerturbMode::Erode => Perturbation::Erode(magnitude),
        PerturbMode::Shift => {
            const DIRS: [(isize, isize); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];
            let (ux, uy) = DIRS[ChaCha8Rng::seed_from_u64(seed).gen_range(0..8)];
            let m = magnitude as isize;
            Perturbation::Shift { dx: ux * m, dy: uy * m }
        }
    };
    apply_perturbation(mask, p)
}

pub fn apply_perturbation(mask: &BinaryMask, p: Perturbation) -> BinaryMask {
    match p {
        Perturbation::Identity | Perturbation::Dilate(0) | Perturbation::Erode(0) => mask.clone(),
        Perturbation::Dilate(r) => square_filter(mask, r, true),
        Perturbation::Erode(r) => square_filter(mask, r, false),
        Perturbation::Shift { dx, dy } => {
            let mut out = BinaryMask::new(mask.width(), mask.height()).expect("same dims");
            for px in mask.foreground() {
                let (c, r) = (px.col as isize + dx, px.row as isize + dy);
                if c >= 0 && r >= 0 && (c as usize) < mask.width() && (r as usize) < mask.height() {
                    out.set(c as usize, r as usize, true);
                }
            }
            out
        }
    }
}

/// Separable max (`dilate`) or min filter over a `(2r+1)²` window; outside
/// the image counts as background.
fn square_filter(mask: &BinaryMask, r: usize, dilate: bool) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let pass = |get: &dyn Fn(usize, usize) -> bool, along_rows: bool| -> Vec<bool> {
        let mut out = vec![false; w * h];
        for row in 0..h {
            for col in 0..w {
                let (pos, len) = if along_rows { (col, w) } else { (row, h) };
                let lo = pos.saturating_sub(r);
                let hi = pos + r;
                let inside = hi < len && pos >= r;
                let mut it = (lo..=hi.min(len - 1)).map(|k| if along_rows { get(k, row) } else { get(col, k) });
                out[row * w + col] = if dilate { it.any(|v| v) } else { inside && it.all(|v| v) };
            }
        }
        out
    };
    let first = pass(&|c, r| mask.get(c, r), true);
    let second = pass(&|c, r| first[r * w + c], false);
    BinaryMask::from_bits(w, h, second).expect("same dims")
}

/// Closed interval a profile parameter is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.hi > self.lo {
            rng.gen_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }
}

/// Per-class parameter ranges for generated sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRanges {
    pub csa_ratio: Range,
    pub semi_axis_x: Range,
    pub semi_axis_y: Range,
    /// Multiplier on the reference flattening ratio at the compression site.
    pub fr_gain: Range,
    pub compression_center: Range,
    pub compression_width: Range,
}

/// How predicted masks are derived from ground truth for each video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionNoise {
    /// Per-video systematic perturbation picked uniformly from this list.
    pub modes: Vec<Perturbation>,
    /// Probability that a predicted frame is blank (missed detection).
    pub dropout: f64,
}

impl Default for PredictionNoise {
    fn default() -> Self {
        PredictionNoise {
            modes: vec![
                Perturbation::Identity,
                Perturbation::Dilate(1),
                Perturbation::Erode(1),
                Perturbation::Shift { dx: 2, dy: 1 },
                Perturbation::Shift { dx: -1, dy: -2 },
            ],
            dropout: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDatasetSpec {
    pub n_cts: usize,
    pub n_normal: usize,
    pub seed: u64,
    pub n_frames: usize,
    pub image_size: (usize, usize),
    pub mm_per_px: f64,
    pub center_drift_px: f64,
    pub cts: ClassRanges,
    pub normal: ClassRanges,
    /// When set, a `pred/` mask directory is written next to `gt/`.
    pub prediction: Option<PredictionNoise>,
}

impl Default for SynthDatasetSpec {
    fn default() -> Self {
        // Shape and flattening vary the same way in both classes, so only the
        // CSA ratio carries the label; PR, ADR and MaxFR overlap across classes.
        let shared = ClassRanges {
            csa_ratio: Range::new(1.0, 1.0),
            semi_axis_x: Range::new(22.0, 30.0),
            semi_axis_y: Range::new(12.0, 16.0),
            fr_gain: Range::new(1.0, 2.0),
            compression_center: Range::new(0.35, 0.65),
            compression_width: Range::new(0.15, 0.4),
        };
        SynthDatasetSpec {
            n_cts: 100,
            n_normal: 100,
            seed: 7,
            n_frames: 24,
            image_size: (128, 128),
            mm_per_px: 0.08,
            center_drift_px: 2.0,
            cts: ClassRanges {
                csa_ratio: Range::new(1.6, 2.4),
                ..shared.clone()
            },
            normal: ClassRanges {
                csa_ratio: Range::new(1.0, 1.25),
                ..shared
            },
            prediction: Some(PredictionNoise::default()),
        }
    }
}

impl SynthDatasetSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.n_cts + self.n_normal == 0 {
            return bad("dataset needs at least one video");
        }
        if !(self.mm_per_px > 0.0 && self.mm_per_px.is_finite()) {
            return bad("mm_per_px must be positive");
        }
        for r in [&self.cts, &self.normal] {
            let all = [
                r.csa_ratio,
                r.semi_axis_x,
                r.semi_axis_y,
                r.fr_gain,
                r.compression_center,
                r.compression_width,
            ];
            if !all.iter().all(Range::is_valid) {
                return bad("every range needs finite lo <= hi");
            }
            if r.fr_gain.lo < 1.0 {
                return bad("fr_gain must be >= 1");
            }
        }
        if self.cts.csa_ratio.lo < CTS_SR_CUTOFF {
            return bad("CTS csa_ratio range must start at or above 1.55");
        }
        if self.normal.csa_ratio.hi >= NORMAL_SR_CEILING || self.normal.csa_ratio.lo < 1.0 {
            return bad("normal csa_ratio range must lie in [1, 1.3)");
        }
        if let Some(p) = &self.prediction {
            if p.modes.is_empty() || !(0.0..=1.0).contains(&p.dropout) {
                return bad("prediction noise needs at least one mode and dropout in [0, 1]");
            }
        }
        Ok(())
    }

    pub fn n_videos(&self) -> usize {
        self.n_cts + self.n_normal
    }

    /// Profile and frame seed for video `index`; CTS videos come first.
    pub fn video_profile(&self, index: usize) -> (SweepProfile, u64) {
        let mut rng = video_rng(self.seed, index);
        let (ranges, label) = if index < self.n_cts {
            (&self.cts, 1)
        } else {
            (&self.normal, 0)
        };
        let a = ranges.semi_axis_x.sample(&mut rng);
        let b = ranges.semi_axis_y.sample(&mut rng);
        let csa_ratio = ranges.csa_ratio.sample(&mut rng);
        let fr_peak = a / b * ranges.fr_gain.sample(&mut rng);
        let compression_center = ranges.compression_center.sample(&mut rng);
        let compression_width = ranges.compression_width.sample(&mut rng);
        let frame_seed: u64 = rng.gen();
        let profile = SweepProfile {
            n_frames: self.n_frames,
            base_axes_px: (a, b),
            csa_ratio,
            compression_center,
            compression_width,
            fr_peak,
            center_drift_px: self.center_drift_px,
            label,
        };
        (profile, frame_seed)
    }

    /// Video ids in index order.
    pub fn video_id(index: usize) -> String {
        format!("vid{index:04}")
    }

    /// Seeded 8:1:1 train/val/test assignment by video index.
    pub fn split_assignment(&self) -> Vec<Split> {
        let n = self.n_videos();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut video_rng(self.seed, u64::MAX as usize));
        let n_train = (n as f64 * 0.8).round() as usize;
        let n_val = ((n as f64 * 0.1).round() as usize).min(n - n_train);
        let mut splits = vec![Split::Test; n];
        for (pos, &i) in order.iter().enumerate() {
            splits[i] = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
        splits
    }
}

fn video_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Per-video analytic record written next to the masks as `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoTruth {
    pub id: String,
    pub label: u8,
    pub profile: SweepProfile,
    pub analytic_sr: f64,
    pub analytic_max_fr: f64,
    pub prediction: Option<Perturbation>,
    pub dropped_frames: Vec<usize>,
    pub frames: Vec<FrameTruth>,
}

pub const TRUTH_FILE: &str = "truth.json";

fn write_masks(dir: &Path, masks: &[BinaryMask]) -> Result<(), PipelineIoError> {
    fs::create_dir_all(dir).map_err(|e| PipelineIoError::io(dir, e))?;
    for (i, m) in masks.iter().enumerate() {
        write_pgm(m, &dir.join(frame_file_name(i)))?;
    }
    Ok(())
}

fn generate_one(spec: &SynthDatasetSpec, index: usize, split: Split, root: &Path) -> Result<VideoRecord, SynthError> {
    let id = SynthDatasetSpec::video_id(index);
    let (profile, frame_seed) = spec.video_profile(index);
    let video = gen_video(&profile, spec.image_size, frame_seed)?;
    let rel = PathBuf::from("videos").join(&id);
    let dir = root.join(&rel);
    write_masks(&dir.join("gt"), &video.masks)?;

    let mut prediction = None;
    let mut dropped_frames = Vec::new();
    if let Some(noise) = &spec.prediction {
        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed);
        rng.set_stream(1);
        let mode = noise.modes[rng.gen_range(0..noise.modes.len())];
        let pred: Vec<BinaryMask> = video
            .masks
            .iter()
            .enumerate()
            .map(|(i, m)| {
                if rng.gen_bool(noise.dropout) {
                    dropped_frames.push(i);
                    BinaryMask::new(m.width(), m.height()).expect("same dims")
                } else {
                    apply_perturbation(m, mode)
                }
            })
            .collect();
        write_masks(&dir.join("pred"), &pred)?;
        prediction = Some(mode);
    }

    let truth = VideoTruth {
        id: id.clone(),
        label: profile.label,
        analytic_sr: video.analytic_sr(),
        analytic_max_fr: video.analytic_max_fr(),
        profile,
        prediction,
        dropped_frames,
        frames: video.truth,
    };
    save_json_exact(&truth, &dir.join(TRUTH_FILE))?;

    Ok(VideoRecord {
        id,
        frames_dir: rel.clone(),
        gt_masks_dir: Some(rel.join("gt")),
        pred_masks_dir: spec.prediction.as_ref().map(|_| rel.join("pred")),
        mm_per_px_x: spec.mm_per_px,
        mm_per_px_y: spec.mm_per_px,
        label: Some(truth.label),
        split,
    })
}

/// Writes `manifest.json`, `synth_spec.json` and `videos/<id>/{gt,pred}/frame_%05d.pgm`
/// plus a `truth.json` per video under `root`. Videos are generated on the
/// ambient rayon pool; the output does not depend on its size.
pub fn gen_dataset(spec: &SynthDatasetSpec, root: &Path) -> Result<Manifest, SynthError> {
    spec.validate()?;
    fs::create_dir_all(root).map_err(|e| PipelineIoError::io(root, e))?;
    let splits = spec.split_assignment();
    let videos = (0..spec.n_videos())
        .into_par_iter()
        .map(|i| generate_one(spec, i, splits[i], root))
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        videos,
    };
    save_json_exact(spec, &root.join("synth_spec.json"))?;
    save_manifest(&manifest, &root.join("manifest.json"))?;
    Ok(manifest)
}
