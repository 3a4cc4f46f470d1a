//! Carpal tunnel syndrome diagnosis from median-nerve segmentation sweeps.
//!
//! The pipeline runs from binary masks to a diagnosis:
//!
//! * [`raster`] extracts nerve geometry (components, contours, extents),
//! * [`seg_eval`] scores predicted masks against ground truth,
//! * [`biometrics`] turns per-frame morphology into video-level features,
//! * [`diagnosis`] trains and applies the random forest and linear baselines,
//! * [`class_eval`] evaluates classifiers and runs the paired tests,
//! * [`synth`] generates synthetic sweeps with analytic ground truth,
//! * [`pipeline_io`] reads and writes masks, manifests, models and reports.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, with `F32` variants where useful.

pub mod biometrics;
pub mod class_eval;
pub mod diagnosis;
pub mod pipeline_io;
pub mod raster;
pub mod scalar;
pub mod seg_eval;
pub mod synth;

pub use biometrics::{aggregate_video, measure_frame, BiometricsError, InvalidFramePolicy, FEATURE_NAMES, SR_INDEX};
pub use class_eval::{ClassEvalError, ConfusionMatrix, WilcoxonMethod};
pub use diagnosis::{Classifier, DiagnosisError, RfHyperparams};
pub use raster::{BinaryMask, GeometryError, Pixel, PointSet2D};
pub use scalar::Scalar;
pub use seg_eval::SegEvalError;

pub type Calibration = raster::Calibration<f64>;
pub type Morphology = biometrics::Morphology<f64>;
pub type FrameMeasure = biometrics::FrameMeasure<f64>;
pub type DiagnosticFeatures = biometrics::DiagnosticFeatures<f64>;
pub type SegScores = seg_eval::SegScores<f64>;
pub type FeatureMatrix = diagnosis::FeatureMatrix<f64>;
pub type RandomForest = diagnosis::RandomForestModel<f64>;
pub type LinearModel = diagnosis::LinearModel<f64>;
pub type ClassificationReport = class_eval::ClassificationReport<f64>;
pub type RocCurve = class_eval::RocCurve<f64>;

pub type CalibrationF32 = raster::Calibration<f32>;
pub type FrameMeasureF32 = biometrics::FrameMeasure<f32>;
pub type DiagnosticFeaturesF32 = biometrics::DiagnosticFeatures<f32>;
pub type FeatureMatrixF32 = diagnosis::FeatureMatrix<f32>;
pub type RandomForestF32 = diagnosis::RandomForestModel<f32>;
