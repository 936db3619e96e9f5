//! Random forest of CART-style trees: bootstrap sampling, random feature
//! subsets per split, greedy Gini-impurity minimization over midpoint
//! thresholds.
//!
//! Every source of randomness derives from the master seed (tree t uses
//! sub-seed `seed + t`), and split ties resolve to the first candidate in
//! sampled-feature order, so fits are reproducible.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sorted_distinct_labels, ClassScores, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features sampled per split; `None` means ceil(sqrt(d)).
    pub features_per_split: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 300,
            max_depth: 7,
            min_samples_leaf: 3,
            features_per_split: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        counts: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y_idx: &'a [usize],
    n_classes: usize,
    max_depth: usize,
    min_samples_leaf: usize,
    features_per_split: usize,
    nodes: Vec<TreeNode>,
}

impl<'a> TreeBuilder<'a> {
    fn class_counts(&self, indices: &[usize]) -> Vec<u32> {
        let mut counts = vec![0u32; self.n_classes];
        for &i in indices {
            counts[self.y_idx[i]] += 1;
        }
        counts
    }

    /// Best (feature, threshold) by Gini impurity decrease, or None when no
    /// split leaves both children with at least `min_samples_leaf` samples
    /// and a strictly positive decrease.
    fn best_split(
        &self,
        indices: &[usize],
        counts: &[u32],
        rng: &mut ChaCha8Rng,
    ) -> Option<(usize, f64)> {
        let n = indices.len();
        let d = self.x[0].len();
        // Partial Fisher-Yates: the first `features_per_split` entries are a
        // uniform draw without replacement, in sampled order.
        let mut features: Vec<usize> = (0..d).collect();
        for i in 0..self.features_per_split.min(d) {
            let j = rng.gen_range(i..d);
            features.swap(i, j);
        }
        features.truncate(self.features_per_split.min(d));

        let total_sumsq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
        let parent_score = total_sumsq / n as f64;
        let mut best: Option<(f64, usize, f64)> = None; // (score, feature, threshold)
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(n);
        for &f in &features {
            sorted.clear();
            sorted.extend(indices.iter().map(|&i| (self.x[i][f], i)));
            sorted.sort_unstable_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .expect("features are finite")
                    .then(a.1.cmp(&b.1))
            });
            let mut left = vec![0u32; self.n_classes];
            let mut sumsq_l = 0.0;
            let mut sumsq_r = total_sumsq;
            for pos in 0..n - 1 {
                let class = self.y_idx[sorted[pos].1];
                let cl = left[class] as f64;
                sumsq_l += 2.0 * cl + 1.0;
                left[class] += 1;
                let cr = (counts[class] - left[class]) as f64;
                sumsq_r -= 2.0 * cr + 1.0;
                if sorted[pos].0 == sorted[pos + 1].0 {
                    continue;
                }
                let nl = pos + 1;
                let nr = n - nl;
                if nl < self.min_samples_leaf || nr < self.min_samples_leaf {
                    continue;
                }
                let score = sumsq_l / nl as f64 + sumsq_r / nr as f64;
                if score > parent_score + 1e-12 && best.map_or(true, |(s, _, _)| score > s) {
                    let threshold = (sorted[pos].0 + sorted[pos + 1].0) / 2.0;
                    best = Some((score, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, indices: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> u32 {
        let counts = self.class_counts(&indices);
        let n = indices.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let can_split = depth < self.max_depth && !pure && n >= 2 * self.min_samples_leaf;
        let split = if can_split {
            self.best_split(&indices, &counts, rng)
        } else {
            None
        };
        match split {
            None => {
                self.nodes.push(TreeNode::Leaf { counts });
                (self.nodes.len() - 1) as u32
            }
            Some((feature, threshold)) => {
                let id = self.nodes.len();
                self.nodes.push(TreeNode::Split {
                    feature,
                    threshold,
                    left: 0,
                    right: 0,
                });
                let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                    .into_iter()
                    .partition(|&i| self.x[i][feature] <= threshold);
                let left = self.grow(left_idx, depth + 1, rng);
                let right = self.grow(right_idx, depth + 1, rng);
                if let TreeNode::Split {
                    left: l, right: r, ..
                } = &mut self.nodes[id]
                {
                    *l = left;
                    *r = right;
                }
                id as u32
            }
        }
    }
}

impl DecisionTree {
    /// Grows one tree on the given rows (no bootstrap; the forest resamples
    /// before calling this). `y_idx` holds class indices in `0..n_classes`.
    pub fn fit(
        x: &[Vec<f64>],
        y_idx: &[usize],
        n_classes: usize,
        params: &ForestParams,
        rng: &mut ChaCha8Rng,
    ) -> Result<DecisionTree, ModelError> {
        if x.is_empty() || x.len() != y_idx.len() {
            return Err(ModelError::InsufficientData(format!(
                "{} rows, {} labels",
                x.len(),
                y_idx.len()
            )));
        }
        let d = x[0].len();
        let m = params
            .features_per_split
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize);
        if m == 0 || m > d {
            return Err(ModelError::InvalidParam(format!(
                "features_per_split={m} must be in 1..={d}"
            )));
        }
        let mut builder = TreeBuilder {
            x,
            y_idx,
            n_classes,
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            features_per_split: m,
            nodes: Vec::new(),
        };
        builder.grow((0..x.len()).collect(), 0, rng);
        Ok(DecisionTree {
            nodes: builder.nodes,
        })
    }

    /// Class counts at the leaf the query routes to.
    pub fn leaf_counts(&self, query: &[f64]) -> &[u32] {
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { counts } => return counts,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if query[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    /// Leaf-majority class index; ties go to the lowest class index.
    pub fn predict_class_index(&self, query: &[f64]) -> usize {
        let counts = self.leaf_counts(query);
        let mut best = 0;
        for i in 1..counts.len() {
            if counts[i] > counts[best] {
                best = i;
            }
        }
        best
    }

    /// Maximum node depth (root = 0).
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], id: usize, depth: usize) -> usize {
            match &nodes[id] {
                TreeNode::Leaf { .. } => depth,
                TreeNode::Split { left, right, .. } => walk(nodes, *left as usize, depth + 1)
                    .max(walk(nodes, *right as usize, depth + 1)),
            }
        }
        walk(&self.nodes, 0, 0)
    }

    /// Smallest number of training samples held by any leaf.
    pub fn min_leaf_size(&self) -> u32 {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Leaf { counts } => Some(counts.iter().sum::<u32>()),
                TreeNode::Split { .. } => None,
            })
            .min()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub classes: Vec<u8>,
    pub n_features: usize,
    pub params: ForestParams,
    pub seed: u64,
}

/// Fits `n_estimators` trees, each on a bootstrap resample drawn with
/// sub-seed `seed + t`.
pub fn rf_fit(
    x: &[Vec<f64>],
    labels: &[u8],
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel, ModelError> {
    if x.is_empty() || x.len() != labels.len() {
        return Err(ModelError::InsufficientData(format!(
            "{} rows, {} labels",
            x.len(),
            labels.len()
        )));
    }
    if params.n_estimators == 0 {
        return Err(ModelError::InvalidParam(
            "n_estimators must be positive".into(),
        ));
    }
    if x.len() < 2 * params.min_samples_leaf {
        return Err(ModelError::InsufficientData(format!(
            "{} rows cannot satisfy min_samples_leaf={}",
            x.len(),
            params.min_samples_leaf
        )));
    }
    let classes = sorted_distinct_labels(labels);
    let y_idx: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label in class set"))
        .collect();
    let n = x.len();
    let mut trees = Vec::with_capacity(params.n_estimators);
    for t in 0..params.n_estimators {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let bx: Vec<Vec<f64>> = sample.iter().map(|&i| x[i].clone()).collect();
        let by: Vec<usize> = sample.iter().map(|&i| y_idx[i]).collect();
        trees.push(DecisionTree::fit(
            &bx,
            &by,
            classes.len(),
            params,
            &mut rng,
        )?);
    }
    Ok(ForestModel {
        trees,
        classes,
        n_features: x[0].len(),
        params: *params,
        seed,
    })
}

impl ForestModel {
    /// Fraction of trees whose leaf-majority class is each class.
    pub fn predict(&self, query: &[f64]) -> Result<ClassScores, ModelError> {
        if query.len() != self.n_features {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_features,
                got: query.len(),
            });
        }
        let mut votes = vec![0.0; self.classes.len()];
        for tree in &self.trees {
            votes[tree.predict_class_index(query)] += 1.0;
        }
        for v in votes.iter_mut() {
            *v /= self.trees.len() as f64;
        }
        Ok(ClassScores {
            labels: self.classes.clone(),
            scores: votes,
        })
    }
}
