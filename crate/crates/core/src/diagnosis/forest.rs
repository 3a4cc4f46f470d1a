//! Random forest of CART trees grown on Gini impurity.
//!
//! Randomness: tree `i` draws from a ChaCha8 stream keyed by the forest seed
//! (`seed_from_u64(seed)`) with stream id `i`. Each tree first draws its
//! bootstrap sample (`n` indices via `gen_range(0..n)`), then, in depth-first
//! left-to-right node order, one feature subset per splittable node
//! (`rand::seq::index::sample`). Trees therefore depend only on
//! `(data, hyperparams, tree index)` and can be grown in any order or in
//! parallel.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_input, Classifier, DiagnosisError, FeatureMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    Gini,
}

/// Number of features examined at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `floor(log2(d))`, at least 1.
    #[default]
    Log2,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::Log2 => (usize::BITS - 1 - n_features.max(1).leading_zeros()) as usize,
            MaxFeatures::All => n_features,
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfHyperparams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub seed: u64,
    pub criterion: Criterion,
}

impl Default for RfHyperparams {
    fn default() -> Self {
        RfHyperparams {
            n_trees: 135,
            max_depth: 6,
            min_samples_split: 12,
            min_samples_leaf: 9,
            max_features: MaxFeatures::Log2,
            seed: 90,
            criterion: Criterion::Gini,
        }
    }
}

impl RfHyperparams {
    pub fn validate(&self) -> Result<(), DiagnosisError> {
        let bad = |msg: &str| Err(DiagnosisError::InvalidHyperparams(msg.to_string()));
        if self.n_trees < 1 {
            return bad("n_trees must be >= 1");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be >= 1");
        }
        if self.min_samples_split < 2 {
            return bad("min_samples_split must be >= 2");
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be >= 1");
        }
        if self.max_features == MaxFeatures::Count(0) {
            return bad("max_features must be >= 1");
        }
        Ok(())
    }
}

/// Arena node; `counts` are `[negative, positive]` bootstrap draws reaching it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode<T> {
    /// Samples with `feature <= threshold` go left.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
        counts: [usize; 2],
    },
    Leaf {
        counts: [usize; 2],
    },
}

impl<T> TreeNode<T> {
    pub fn counts(&self) -> [usize; 2] {
        match self {
            TreeNode::Split { counts, .. } | TreeNode::Leaf { counts } => *counts,
        }
    }
}

/// One CART tree stored as a node arena with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree<T> {
    pub nodes: Vec<TreeNode<T>>,
}

impl<T: Scalar> DecisionTree<T> {
    fn leaf_for(&self, x: &[T]) -> [usize; 2] {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => idx = if x[*feature] <= *threshold { *left } else { *right },
                TreeNode::Leaf { counts } => return *counts,
            }
        }
    }

    /// Positive fraction of the leaf reached by `x`.
    pub fn leaf_fraction(&self, x: &[T]) -> T {
        let [neg, pos] = self.leaf_for(x);
        T::from_count(pos) / T::from_count(neg + pos)
    }

    /// Depth of the deepest leaf (a lone root leaf has depth 0).
    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[TreeNode<T>], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    /// Unnormalised weighted Gini decrease per feature.
    fn impurity_decreases(&self, n_features: usize) -> Vec<T> {
        let mut out = vec![T::zero(); n_features];
        for node in &self.nodes {
            if let TreeNode::Split {
                feature,
                left,
                right,
                counts,
                ..
            } = node
            {
                let parent = weighted_gini::<T>(*counts);
                let l = weighted_gini::<T>(self.nodes[*left].counts());
                let r = weighted_gini::<T>(self.nodes[*right].counts());
                out[*feature] = out[*feature] + (parent - l - r);
            }
        }
        out
    }
}

/// `n · gini(counts)` with `gini = 2·p0·p1`, written symmetrically in the two
/// classes so that relabelling cannot change split choices.
fn weighted_gini<T: Scalar>(counts: [usize; 2]) -> T {
    let n = counts[0] + counts[1];
    if n == 0 {
        return T::zero();
    }
    T::two() * T::from_count(counts[0] * counts[1]) / T::from_count(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel<T> {
    pub hyperparams: RfHyperparams,
    pub feature_names: Vec<String>,
    pub trees: Vec<DecisionTree<T>>,
}

impl<T: Scalar> Classifier<T> for RandomForestModel<T> {
    fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Mean over trees of the reached leaf's positive fraction.
    fn predict_proba(&self, features: &[T]) -> Result<T, DiagnosisError> {
        check_input(self.n_features(), features)?;
        let sum: T = self.trees.iter().map(|t| t.leaf_fraction(features)).sum();
        Ok(sum / T::from_count(self.trees.len()))
    }
}

struct Grower<'a, T> {
    data: &'a FeatureMatrix<T>,
    hp: &'a RfHyperparams,
    k_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode<T>>,
}

struct BestSplit<T> {
    feature: usize,
    threshold: T,
    child_term: T,
}

impl<T: Scalar> Grower<'_, T> {
    fn counts(&self, samples: &[usize]) -> [usize; 2] {
        let pos = samples.iter().filter(|&&s| self.data.labels()[s] == 1).count();
        [samples.len() - pos, pos]
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&samples);
        let idx = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { counts });

        let n = samples.len();
        let splittable = depth < self.hp.max_depth
            && n >= self.hp.min_samples_split
            && n >= 2 * self.hp.min_samples_leaf
            && counts[0] > 0
            && counts[1] > 0;
        if !splittable {
            return idx;
        }

        let mut features = sample(&mut self.rng, self.data.n_features(), self.k_features).into_vec();
        features.sort_unstable();

        let Some(best) = self.best_split(&samples, &features, counts) else {
            return idx;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&s| self.data.value(s, best.feature) <= best.threshold);
        let left_idx = self.grow(left, depth + 1);
        let right_idx = self.grow(right, depth + 1);
        self.nodes[idx] = TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: left_idx,
            right: right_idx,
            counts,
        };
        idx
    }

    /// Minimises `l0·l1/nl + r0·r1/nr` (proportional to the weighted child
    /// Gini) over midpoints between consecutive distinct values. Strict
    /// improvement keeps the lowest feature, then the lowest threshold, on ties.
    fn best_split(&self, samples: &[usize], features: &[usize], counts: [usize; 2]) -> Option<BestSplit<T>> {
        let n = samples.len();
        let min_leaf = self.hp.min_samples_leaf;
        let parent_term = T::from_count(counts[0] * counts[1]) / T::from_count(n);
        let mut best: Option<BestSplit<T>> = None;
        let mut column: Vec<(T, u8)> = Vec::with_capacity(n);

        for &f in features {
            column.clear();
            column.extend(samples.iter().map(|&s| (self.data.value(s, f), self.data.labels()[s])));
            column.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));

            let mut left = [0usize; 2];
            for i in 0..n - 1 {
                left[column[i].1 as usize] += 1;
                let (lo, hi) = (column[i].0, column[i + 1].0);
                if lo == hi {
                    continue;
                }
                let nl = i + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let right = [counts[0] - left[0], counts[1] - left[1]];
                let child_term = T::from_count(left[0] * left[1]) / T::from_count(nl)
                    + T::from_count(right[0] * right[1]) / T::from_count(nr);
                if best.as_ref().is_none_or(|b| child_term < b.child_term) {
                    let mut threshold = lo + (hi - lo) * T::half();
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        child_term,
                    });
                }
            }
        }
        let tolerance = parent_term * T::epsilon() * T::lit(16.0);
        best.filter(|b| parent_term - b.child_term > tolerance)
    }
}

fn grow_tree<T: Scalar>(data: &FeatureMatrix<T>, hp: &RfHyperparams, tree_index: usize) -> DecisionTree<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    rng.set_stream(tree_index as u64);
    let n = data.n_rows();
    let bootstrap: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let mut grower = Grower {
        data,
        hp,
        k_features: hp.max_features.resolve(data.n_features()),
        rng,
        nodes: Vec::new(),
    };
    grower.grow(bootstrap, 0);
    DecisionTree { nodes: grower.nodes }
}

/// Fits `hp.n_trees` bootstrap CART trees. Trees are grown on the ambient
/// rayon pool; the result does not depend on the degree of parallelism.
pub fn train_random_forest<T: Scalar>(
    data: &FeatureMatrix<T>,
    hp: &RfHyperparams,
    feature_names: &[&str],
) -> Result<RandomForestModel<T>, DiagnosisError> {
    hp.validate()?;
    if data.n_rows() < hp.min_samples_split {
        return Err(DiagnosisError::TooFewSamples {
            need: hp.min_samples_split,
            got: data.n_rows(),
        });
    }
    data.require_both_classes()?;
    if feature_names.len() != data.n_features() {
        return Err(DiagnosisError::FeatureCountMismatch {
            expected: data.n_features(),
            got: feature_names.len(),
        });
    }
    let trees = (0..hp.n_trees)
        .into_par_iter()
        .map(|i| grow_tree(data, hp, i))
        .collect();
    Ok(RandomForestModel {
        hyperparams: hp.clone(),
        feature_names: feature_names.iter().map(|s| s.to_string()).collect(),
        trees,
    })
}

/// Mean decrease in impurity: per-tree decreases normalised to one, averaged
/// over trees, normalised again. A forest with no splits at all reports a
/// uniform vector.
pub fn rf_feature_importance<T: Scalar>(model: &RandomForestModel<T>) -> Vec<T> {
    let d = model.n_features();
    let mut total = vec![T::zero(); d];
    for tree in &model.trees {
        let dec = tree.impurity_decreases(d);
        let sum: T = dec.iter().copied().sum();
        if sum > T::zero() {
            for (t, v) in total.iter_mut().zip(dec) {
                *t = *t + v / sum;
            }
        }
    }
    let sum: T = total.iter().copied().sum();
    if sum > T::zero() {
        total.into_iter().map(|v| v / sum).collect()
    } else {
        vec![T::one() / T::from_count(d); d]
    }
}
