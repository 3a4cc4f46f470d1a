//! CTS classifiers over video-level diagnostic features: a CART random
//! forest (the primary model), plus logistic-regression and linear-SVM
//! variants used for comparison.

mod forest;
mod linear;

use thiserror::Error;

use crate::biometrics::DiagnosticFeatures;
use crate::scalar::Scalar;

pub use forest::{
    rf_feature_importance, train_random_forest, Criterion, DecisionTree, MaxFeatures, RandomForestModel, RfHyperparams,
    TreeNode,
};
pub use linear::{
    single_feature_models, train_linear_svm, train_linear_svm_with_history, train_logistic_regression, HingeLoss,
    LinearKind, LinearModel, LogisticLoss, LrParams, SvmParams,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiagnosisError {
    #[error("feature matrix has no rows")]
    EmptyData,
    #[error("row {row} has {got} features, expected {expected}")]
    RaggedRow { row: usize, expected: usize, got: usize },
    #[error("non-finite feature at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },
    #[error("label {label} at row {row} is not 0 or 1")]
    InvalidLabel { row: usize, label: u8 },
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("training data contains a single class")]
    SingleClass,
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparams(String),
    #[error("model expects {expected} features, got {got}")]
    FeatureCountMismatch { expected: usize, got: usize },
    #[error("decision threshold {0} outside [0, 1]")]
    InvalidThreshold(String),
}

/// Dense row-major design matrix with binary labels (CTS = 1, Non-CTS = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    n_features: usize,
    values: Vec<T>,
    labels: Vec<u8>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(rows: Vec<Vec<T>>, labels: Vec<u8>) -> Result<Self, DiagnosisError> {
        if rows.len() != labels.len() {
            return Err(DiagnosisError::LengthMismatch {
                rows: rows.len(),
                labels: labels.len(),
            });
        }
        let n_features = rows.first().ok_or(DiagnosisError::EmptyData)?.len();
        if n_features == 0 {
            return Err(DiagnosisError::EmptyData);
        }
        let mut values = Vec::with_capacity(rows.len() * n_features);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != n_features {
                return Err(DiagnosisError::RaggedRow {
                    row,
                    expected: n_features,
                    got: r.len(),
                });
            }
            if let Some(col) = r.iter().position(|v| !v.is_finite()) {
                return Err(DiagnosisError::NonFiniteFeature { row, col });
            }
            values.extend_from_slice(r);
        }
        if let Some(row) = labels.iter().position(|&l| l > 1) {
            return Err(DiagnosisError::InvalidLabel {
                row,
                label: labels[row],
            });
        }
        Ok(FeatureMatrix {
            n_features,
            values,
            labels,
        })
    }

    /// One row per video in PR, SR, ADR, MaxFR, MaxCSA order.
    pub fn from_features(features: &[DiagnosticFeatures<T>], labels: Vec<u8>) -> Result<Self, DiagnosisError> {
        Self::new(features.iter().map(|f| f.to_array().to_vec()).collect(), labels)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks_exact(self.n_features)
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> T {
        self.values[row * self.n_features + col]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Single-column matrix holding feature `col`.
    pub fn select_column(&self, col: usize) -> FeatureMatrix<T> {
        assert!(col < self.n_features, "column {col} out of range");
        FeatureMatrix {
            n_features: 1,
            values: (0..self.n_rows()).map(|r| self.value(r, col)).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Same rows with every label flipped.
    pub fn with_flipped_labels(&self) -> FeatureMatrix<T> {
        FeatureMatrix {
            n_features: self.n_features,
            values: self.values.clone(),
            labels: self.labels.iter().map(|&l| 1 - l).collect(),
        }
    }

    pub(crate) fn class_counts(&self) -> [usize; 2] {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - pos, pos]
    }

    pub(crate) fn require_both_classes(&self) -> Result<(), DiagnosisError> {
        let [neg, pos] = self.class_counts();
        if neg == 0 || pos == 0 {
            Err(DiagnosisError::SingleClass)
        } else {
            Ok(())
        }
    }
}

/// A fitted binary classifier producing a positive-class score in `[0, 1]`.
pub trait Classifier<T: Scalar> {
    fn n_features(&self) -> usize;

    /// Probability-like positive score for one feature vector.
    fn predict_proba(&self, features: &[T]) -> Result<T, DiagnosisError>;

    /// Label 1 iff the score reaches `threshold`.
    fn classify(&self, features: &[T], threshold: T) -> Result<u8, DiagnosisError> {
        if !(threshold >= T::zero() && threshold <= T::one()) {
            return Err(DiagnosisError::InvalidThreshold(format!("{threshold}")));
        }
        Ok(u8::from(self.predict_proba(features)? >= threshold))
    }
}

pub(crate) fn check_input<T: Scalar>(expected: usize, features: &[T]) -> Result<(), DiagnosisError> {
    if features.len() != expected {
        return Err(DiagnosisError::FeatureCountMismatch {
            expected,
            got: features.len(),
        });
    }
    if let Some(col) = features.iter().position(|v| !v.is_finite()) {
        return Err(DiagnosisError::NonFiniteFeature { row: 0, col });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_validation() {
        assert_eq!(
            FeatureMatrix::<f64>::new(vec![], vec![]),
            Err(DiagnosisError::EmptyData)
        );
        assert_eq!(
            FeatureMatrix::new(vec![vec![1.0, 2.0], vec![1.0]], vec![0, 1]),
            Err(DiagnosisError::RaggedRow {
                row: 1,
                expected: 2,
                got: 1
            })
        );
        assert_eq!(
            FeatureMatrix::new(vec![vec![1.0, f64::NAN]], vec![0]),
            Err(DiagnosisError::NonFiniteFeature { row: 0, col: 1 })
        );
        assert_eq!(
            FeatureMatrix::new(vec![vec![1.0]], vec![2]),
            Err(DiagnosisError::InvalidLabel { row: 0, label: 2 })
        );
        assert_eq!(
            FeatureMatrix::new(vec![vec![1.0]], vec![0, 1]),
            Err(DiagnosisError::LengthMismatch { rows: 1, labels: 2 })
        );
    }

    #[test]
    fn column_selection_and_flip() {
        let m = FeatureMatrix::new(vec![vec![1.0, 2.0], vec![3.0, 4.0]], vec![0, 1]).unwrap();
        let c = m.select_column(1);
        assert_eq!(c.n_features(), 1);
        assert_eq!(c.row(1), &[4.0]);
        assert_eq!(m.with_flipped_labels().labels(), &[1, 0]);
        assert_eq!(m.class_counts(), [1, 1]);
    }
}
