//! Classification evaluation (confusion-matrix rates, ROC, AUC) and the
//! hypothesis tests used to compare readers and models: Wilcoxon signed-rank
//! and the 2×2 chi-square test.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassEvalError {
    #[error("lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no samples")]
    Empty,
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(u8),
    #[error("both classes must be present")]
    SingleClass,
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("contingency table has an empty row or column")]
    DegenerateMargin,
}

/// Counts with CTS (label 1) as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Rates derived from a confusion matrix; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport<T> {
    pub acc: T,
    pub sen: Option<T>,
    pub spe: Option<T>,
    pub f1: Option<T>,
    pub fnr: Option<T>,
    pub fpr: Option<T>,
    pub auc: Option<T>,
}

fn check_labels(labels: &[u8]) -> Result<(), ClassEvalError> {
    match labels.iter().find(|&&l| l > 1) {
        Some(&l) => Err(ClassEvalError::InvalidLabel(l)),
        None => Ok(()),
    }
}

pub fn confusion(pred: &[u8], truth: &[u8]) -> Result<ConfusionMatrix, ClassEvalError> {
    if pred.len() != truth.len() {
        return Err(ClassEvalError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(ClassEvalError::Empty);
    }
    check_labels(pred)?;
    check_labels(truth)?;
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => cm.tp += 1,
            (1, _) => cm.fp += 1,
            (_, 1) => cm.fn_ += 1,
            _ => cm.tn += 1,
        }
    }
    Ok(cm)
}

pub fn report<T: Scalar>(cm: &ConfusionMatrix) -> ClassificationReport<T> {
    let ratio = |num: usize, den: usize| (den > 0).then(|| T::from_count(num) / T::from_count(den));
    ClassificationReport {
        acc: ratio(cm.tp + cm.tn, cm.total()).unwrap_or_else(T::nan),
        sen: ratio(cm.tp, cm.tp + cm.fn_),
        spe: ratio(cm.tn, cm.tn + cm.fp),
        f1: ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_),
        fnr: ratio(cm.fn_, cm.tp + cm.fn_),
        fpr: ratio(cm.fp, cm.tn + cm.fp),
        auc: None,
    }
}

/// One operating point: everything scoring `>= threshold` is called positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint<T> {
    pub threshold: T,
    pub fpr: T,
    pub tpr: T,
    pub tp: usize,
    pub fp: usize,
}

/// ROC from threshold `+inf` (the origin) down through every distinct score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve<T> {
    pub points: Vec<RocPoint<T>>,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl<T: Scalar> RocCurve<T> {
    /// `threshold,fpr,tpr` rows, starting with the `inf` origin row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr);
        }
        out
    }
}

pub fn roc_curve<T: Scalar>(scores: &[T], truth: &[u8]) -> Result<RocCurve<T>, ClassEvalError> {
    if scores.len() != truth.len() {
        return Err(ClassEvalError::LengthMismatch(scores.len(), truth.len()));
    }
    if scores.is_empty() {
        return Err(ClassEvalError::Empty);
    }
    check_labels(truth)?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(ClassEvalError::NonFiniteScore(i));
    }
    let n_pos = truth.iter().filter(|&&l| l == 1).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(ClassEvalError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite"));

    let (pos_f, neg_f) = (T::from_count(n_pos), T::from_count(n_neg));
    let point = |threshold: T, tp: usize, fp: usize| RocPoint {
        threshold,
        fpr: T::from_count(fp) / neg_f,
        tpr: T::from_count(tp) / pos_f,
        tp,
        fp,
    };
    let mut points = vec![point(T::infinity(), 0, 0)];
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        // tied scores enter together
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(point(s, tp, fp));
    }
    Ok(RocCurve { points, n_pos, n_neg })
}

/// Trapezoidal area, accumulated on integer counts so that it equals the
/// Mann–Whitney statistic up to a single rounding.
pub fn auc<T: Scalar>(curve: &RocCurve<T>) -> T {
    let twice_area: u128 = curve
        .points
        .windows(2)
        .map(|w| (w[1].fp - w[0].fp) as u128 * (w[1].tp + w[0].tp) as u128)
        .sum();
    let denom = 2 * curve.n_pos as u128 * curve.n_neg as u128;
    T::lit(twice_area as f64 / denom as f64)
}

/// Which null distribution the Wilcoxon p-value is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WilcoxonMethod {
    /// Exact for `n <= 20` non-zero differences, normal approximation above.
    #[default]
    Auto,
    Exact,
    Normal,
}

/// Largest `n` for which [`WilcoxonMethod::Auto`] enumerates exactly.
pub const WILCOXON_EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult<T> {
    /// `min(W+, W-)`.
    pub statistic: T,
    pub p_value: T,
    /// Non-zero differences used.
    pub n: usize,
    pub exact: bool,
}

/// Average ranks (1-based) of `values`, ties sharing the mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Two-sided Wilcoxon signed-rank test on paired samples; zero differences
/// are dropped.
///
/// The exact p-value counts sign assignments with `min(W+, W-)` at most the
/// observed statistic, using the (tie-averaged) ranks as given. The normal
/// approximation applies the tie correction to the variance and a 0.5
/// continuity correction.
pub fn wilcoxon_signed_rank<T: Scalar>(
    x: &[T],
    y: &[T],
    method: WilcoxonMethod,
) -> Result<WilcoxonResult<T>, ClassEvalError> {
    if x.len() != y.len() {
        return Err(ClassEvalError::LengthMismatch(x.len(), y.len()));
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| (a - b).to_f64_lossy())
        .filter(|d| *d != 0.0)
        .collect();
    if let Some(i) = diffs.iter().position(|d| !d.is_finite()) {
        return Err(ClassEvalError::NonFiniteScore(i));
    }
    let n = diffs.len();
    if n == 0 {
        return Err(ClassEvalError::AllZeroDifferences);
    }
    let ranks = average_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = w_plus.min(total - w_plus);

    let exact = match method {
        WilcoxonMethod::Auto => n <= WILCOXON_EXACT_MAX_N,
        WilcoxonMethod::Exact => true,
        WilcoxonMethod::Normal => false,
    };
    let p = if exact {
        exact_signed_rank_p(&ranks, w)
    } else {
        let mean = total / 2.0;
        let tie_term: f64 = tie_group_sizes(&ranks).map(|t| t * t * t - t).sum::<f64>() / 48.0;
        let var = (n * (n + 1) * (2 * n + 1)) as f64 / 24.0 - tie_term;
        if var <= 0.0 {
            1.0
        } else {
            let z = ((mean - w) - 0.5).max(0.0) / var.sqrt();
            (2.0 * normal_sf(z)).min(1.0)
        }
    };
    Ok(WilcoxonResult {
        statistic: T::lit(w),
        p_value: T::lit(p),
        n,
        exact,
    })
}

fn tie_group_sizes(ranks: &[f64]) -> impl Iterator<Item = f64> {
    let mut sorted = ranks.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        sizes.push(j as f64);
        i += j;
    }
    sizes.into_iter()
}

/// Distribution of W+ over all `2^n` sign patterns, built by dynamic
/// programming on doubled ranks (tie-averaged ranks are multiples of 1/2).
fn exact_signed_rank_p(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut ways = vec![0f64; max + 1];
    ways[0] = 1.0;
    for &r in &doubled {
        for s in (r..=max).rev() {
            ways[s] += ways[s - r];
        }
    }
    let w2 = (w * 2.0).round() as usize;
    let count: f64 = ways
        .iter()
        .enumerate()
        .filter(|&(s, _)| s.min(max - s) <= w2)
        .map(|(_, &c)| c)
        .sum();
    (count / 2f64.powi(ranks.len() as i32)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult<T> {
    pub chi2: T,
    pub p_value: T,
}

/// Pearson chi-square test of independence on a 2×2 table (one degree of
/// freedom), optionally with Yates' continuity correction.
pub fn chi_square_2x2<T: Scalar>(table: [[usize; 2]; 2], yates: bool) -> Result<ChiSquareResult<T>, ClassEvalError> {
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    if rows.contains(&0) || cols.contains(&0) {
        return Err(ClassEvalError::DegenerateMargin);
    }
    let total = (rows[0] + rows[1]) as f64;
    let mut chi2 = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &observed) in row.iter().enumerate() {
            let expected = rows[i] as f64 * cols[j] as f64 / total;
            let mut dev = (observed as f64 - expected).abs();
            if yates {
                dev = (dev - 0.5).max(0.0);
            }
            chi2 += dev * dev / expected;
        }
    }
    // chi-square(1) survival function
    let p = erfc((chi2 / 2.0).sqrt());
    Ok(ChiSquareResult {
        chi2: T::lit(chi2),
        p_value: T::lit(p),
    })
}
