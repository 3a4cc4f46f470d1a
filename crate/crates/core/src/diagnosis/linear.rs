//! Linear classifiers on standardised features: L2-regularised logistic
//! regression (gradient descent) and a linear SVM (hinge loss, subgradient
//! descent with backtracking).

use serde::{Deserialize, Serialize};

use super::{check_input, Classifier, DiagnosisError, FeatureMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    LogisticRegression,
    LinearSvm,
}

/// `score = w · ((x - mean) / scale) + bias`.
///
/// For logistic regression `predict_proba` is the fitted probability; for the
/// SVM it is `sigmoid(score)`, a monotone score whose 0.5 level is the
/// separating hyperplane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel<T> {
    pub kind: LinearKind,
    pub feature_names: Vec<String>,
    pub weights: Vec<T>,
    pub bias: T,
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> LinearModel<T> {
    pub fn decision_function(&self, features: &[T]) -> Result<T, DiagnosisError> {
        check_input(self.weights.len(), features)?;
        let z = features
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .zip(&self.weights)
            .map(|(((&x, &m), &s), &w)| w * (x - m) / s)
            .sum::<T>();
        Ok(z + self.bias)
    }
}

impl<T: Scalar> Classifier<T> for LinearModel<T> {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn predict_proba(&self, features: &[T]) -> Result<T, DiagnosisError> {
        Ok(sigmoid(self.decision_function(features)?))
    }
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus<T: Scalar>(t: T) -> T {
    t.max(T::zero()) + (-t.abs()).exp().ln_1p()
}

/// Column means and population standard deviations; constant columns get
/// scale 1 so they standardise to zero.
fn standardisation<T: Scalar>(data: &FeatureMatrix<T>) -> (Vec<T>, Vec<T>) {
    let n = T::from_count(data.n_rows());
    let d = data.n_features();
    let mean: Vec<T> = (0..d)
        .map(|j| (0..data.n_rows()).map(|i| data.value(i, j)).sum::<T>() / n)
        .collect();
    let scale = (0..d)
        .map(|j| {
            let var = (0..data.n_rows())
                .map(|i| (data.value(i, j) - mean[j]).powi(2))
                .sum::<T>()
                / n;
            let sd = var.sqrt();
            if sd > T::zero() && sd.is_finite() {
                sd
            } else {
                T::one()
            }
        })
        .collect();
    (mean, scale)
}

/// Standardised design with labels mapped to ±1.
struct Design<T> {
    x: Vec<Vec<T>>,
    y: Vec<T>,
    mean: Vec<T>,
    scale: Vec<T>,
}

impl<T: Scalar> Design<T> {
    fn new(data: &FeatureMatrix<T>) -> Self {
        let (mean, scale) = standardisation(data);
        let x = data
            .rows()
            .map(|r| {
                r.iter()
                    .zip(&mean)
                    .zip(&scale)
                    .map(|((&v, &m), &s)| (v - m) / s)
                    .collect()
            })
            .collect();
        let y = data
            .labels()
            .iter()
            .map(|&l| if l == 1 { T::one() } else { -T::one() })
            .collect();
        Design { x, y, mean, scale }
    }

    fn n(&self) -> T {
        T::from_count(self.y.len())
    }

    fn margins<'a>(&'a self, w: &'a [T], b: T) -> impl Iterator<Item = (usize, T)> + 'a {
        self.x.iter().zip(&self.y).enumerate().map(move |(i, (row, &y))| {
            let z = row.iter().zip(w).map(|(&x, &wj)| x * wj).sum::<T>() + b;
            (i, y * z)
        })
    }
}

/// Mean logistic loss plus `l2/2 · |w|²` on the standardised design
/// (the bias is not penalised).
pub struct LogisticLoss<T> {
    design: Design<T>,
    l2: T,
}

impl<T: Scalar> LogisticLoss<T> {
    pub fn new(data: &FeatureMatrix<T>, l2: T) -> Self {
        LogisticLoss {
            design: Design::new(data),
            l2,
        }
    }

    pub fn value(&self, w: &[T], b: T) -> T {
        let data_term = self.design.margins(w, b).map(|(_, m)| softplus(-m)).sum::<T>() / self.design.n();
        data_term + self.l2 * T::half() * w.iter().map(|&v| v * v).sum::<T>()
    }

    pub fn gradient(&self, w: &[T], b: T) -> (Vec<T>, T) {
        let d = &self.design;
        let mut gw = vec![T::zero(); w.len()];
        let mut gb = T::zero();
        for (i, m) in d.margins(w, b) {
            // d/dz softplus(-y z) = -y · sigmoid(-y z)
            let coef = -d.y[i] * sigmoid(-m);
            for (g, &x) in gw.iter_mut().zip(&d.x[i]) {
                *g = *g + coef * x;
            }
            gb = gb + coef;
        }
        let n = d.n();
        let gw = gw.into_iter().zip(w).map(|(g, &wj)| g / n + self.l2 * wj).collect();
        (gw, gb / n)
    }

    /// Upper bound on the gradient's Lipschitz constant.
    fn lipschitz(&self) -> T {
        let d = &self.design;
        let sq: T = d.x.iter().flatten().map(|&v| v * v).sum::<T>() / d.n();
        T::lit(0.25) * (T::one() + sq) + self.l2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrParams<T> {
    pub l2: T,
    pub max_iters: usize,
    pub tol: T,
}

impl<T: Scalar> Default for LrParams<T> {
    fn default() -> Self {
        LrParams {
            l2: T::lit(1e-2),
            max_iters: 20_000,
            tol: T::lit(1e-8),
        }
    }
}

/// Gradient descent with step `1/L`; stops once the gradient's max-norm is
/// below `tol` or after `max_iters` steps.
pub fn train_logistic_regression<T: Scalar>(
    data: &FeatureMatrix<T>,
    params: &LrParams<T>,
    feature_names: &[&str],
) -> Result<LinearModel<T>, DiagnosisError> {
    data.require_both_classes()?;
    if params.l2.is_nan() || params.l2 < T::zero() {
        return Err(DiagnosisError::InvalidHyperparams("l2 must be >= 0".into()));
    }
    let loss = LogisticLoss::new(data, params.l2);
    let step = T::one() / loss.lipschitz();
    let mut w = vec![T::zero(); data.n_features()];
    let mut b = T::zero();
    for _ in 0..params.max_iters {
        let (gw, gb) = loss.gradient(&w, b);
        let norm = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if norm < params.tol {
            break;
        }
        for (wj, g) in w.iter_mut().zip(gw) {
            *wj = *wj - step * g;
        }
        b = b - step * gb;
    }
    Ok(LinearModel {
        kind: LinearKind::LogisticRegression,
        feature_names: names(feature_names, data.n_features()),
        weights: w,
        bias: b,
        mean: loss.design.mean,
        scale: loss.design.scale,
    })
}

fn names(given: &[&str], d: usize) -> Vec<String> {
    if given.len() == d {
        given.iter().map(|s| s.to_string()).collect()
    } else {
        (0..d).map(|j| format!("x{j}")).collect()
    }
}

/// `1/2 · |w|² + c · mean(max(0, 1 - y·z))` on the standardised design.
pub struct HingeLoss<T> {
    design: Design<T>,
    c: T,
}

impl<T: Scalar> HingeLoss<T> {
    pub fn new(data: &FeatureMatrix<T>, c: T) -> Self {
        HingeLoss {
            design: Design::new(data),
            c,
        }
    }

    pub fn value(&self, w: &[T], b: T) -> T {
        let hinge = self
            .design
            .margins(w, b)
            .map(|(_, m)| (T::one() - m).max(T::zero()))
            .sum::<T>()
            / self.design.n();
        T::half() * w.iter().map(|&v| v * v).sum::<T>() + self.c * hinge
    }

    /// A subgradient; margin exactly 1 counts as inactive.
    pub fn subgradient(&self, w: &[T], b: T) -> (Vec<T>, T) {
        let d = &self.design;
        let mut gw = vec![T::zero(); w.len()];
        let mut gb = T::zero();
        for (i, m) in d.margins(w, b) {
            if m < T::one() {
                for (g, &x) in gw.iter_mut().zip(&d.x[i]) {
                    *g = *g - d.y[i] * x;
                }
                gb = gb - d.y[i];
            }
        }
        let k = self.c / d.n();
        let gw = gw.into_iter().zip(w).map(|(g, &wj)| wj + k * g).collect();
        (gw, k * gb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams<T> {
    pub c: T,
    pub max_iters: usize,
}

impl<T: Scalar> Default for SvmParams<T> {
    fn default() -> Self {
        SvmParams {
            c: T::one(),
            max_iters: 2_000,
        }
    }
}

/// As [`train_linear_svm`], also returning the objective after each epoch.
///
/// Each epoch takes a full-batch subgradient step of size `η₀/√(t+1)`,
/// halving it up to 30 times until the objective decreases; an epoch with no
/// decreasing step leaves the iterate unchanged, so the history never rises.
pub fn train_linear_svm_with_history<T: Scalar>(
    data: &FeatureMatrix<T>,
    params: &SvmParams<T>,
    feature_names: &[&str],
) -> Result<(LinearModel<T>, Vec<T>), DiagnosisError> {
    data.require_both_classes()?;
    if !(params.c > T::zero() && params.c.is_finite()) {
        return Err(DiagnosisError::InvalidHyperparams("c must be > 0".into()));
    }
    let loss = HingeLoss::new(data, params.c);
    let d = data.n_features();
    let mut w = vec![T::zero(); d];
    let mut b = T::zero();
    let mut current = loss.value(&w, b);
    let mut history = Vec::with_capacity(params.max_iters);
    let eta0 = T::one() / (T::one() + params.c);

    for t in 0..params.max_iters {
        let (gw, gb) = loss.subgradient(&w, b);
        if gw.iter().all(|g| g.is_zero()) && gb.is_zero() {
            history.push(current);
            break;
        }
        let mut eta = eta0 / T::from_count(t + 1).sqrt();
        for _ in 0..30 {
            let cand_w: Vec<T> = w.iter().zip(&gw).map(|(&wj, &g)| wj - eta * g).collect();
            let cand_b = b - eta * gb;
            let value = loss.value(&cand_w, cand_b);
            if value < current {
                w = cand_w;
                b = cand_b;
                current = value;
                break;
            }
            eta = eta * T::half();
        }
        history.push(current);
    }
    let model = LinearModel {
        kind: LinearKind::LinearSvm,
        feature_names: names(feature_names, d),
        weights: w,
        bias: b,
        mean: loss.design.mean,
        scale: loss.design.scale,
    };
    Ok((model, history))
}

pub fn train_linear_svm<T: Scalar>(
    data: &FeatureMatrix<T>,
    params: &SvmParams<T>,
    feature_names: &[&str],
) -> Result<LinearModel<T>, DiagnosisError> {
    train_linear_svm_with_history(data, params, feature_names).map(|(m, _)| m)
}

/// One logistic regression per column, in column order.
pub fn single_feature_models<T: Scalar>(
    data: &FeatureMatrix<T>,
    params: &LrParams<T>,
    feature_names: &[&str],
) -> Result<Vec<LinearModel<T>>, DiagnosisError> {
    (0..data.n_features())
        .map(|j| {
            let name = feature_names.get(j).copied().unwrap_or("x0");
            train_logistic_regression(&data.select_column(j), params, &[name])
        })
        .collect()
}
