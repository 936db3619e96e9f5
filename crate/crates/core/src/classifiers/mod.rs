//! From-scratch classifiers with per-class scoring.
//!
//! All three models are deterministic functions of their training data,
//! hyperparameters and seed. Randomized fits (forest bootstraps) derive
//! per-unit sub-seeds by counter from the master seed, so serial and parallel
//! fits would produce identical models.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod forest;
pub mod knn;
pub mod store;
pub mod svm;

pub use forest::{rf_fit, DecisionTree, ForestModel, ForestParams};
pub use knn::{elbow_curve, KnnModel};
pub use svm::{smo_solve, svc_fit, SvcModel};

/// Per-class real scores over a model's label set, used both for prediction
/// (argmax) and for ROC curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    /// Sorted ascending.
    pub labels: Vec<u8>,
    pub scores: Vec<f64>,
}

impl ClassScores {
    /// Highest-scoring label; exact ties go to the lowest label.
    pub fn argmax(&self) -> u8 {
        let mut best = 0;
        for i in 1..self.scores.len() {
            if self.scores[i] > self.scores[best] {
                best = i;
            }
        }
        self.labels[best]
    }

    /// Score for one label; 0.0 for labels the model has never seen.
    pub fn score_for(&self, label: u8) -> f64 {
        match self.labels.iter().position(|&l| l == label) {
            Some(i) => self.scores[i],
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    DimensionMismatch {
        expected: usize,
        got: usize,
    },
    InsufficientData(String),
    /// SVC training needs at least two classes; per-pair solves need both signs.
    SingleClass,
    NoConvergence {
        passes: usize,
        pair: Option<(u8, u8)>,
    },
    InvalidParam(String),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::DimensionMismatch { expected, got } => {
                write!(f, "query has {got} features, model expects {expected}")
            }
            ModelError::InsufficientData(msg) => write!(f, "insufficient training data: {msg}"),
            ModelError::SingleClass => write!(f, "training labels contain a single class"),
            ModelError::NoConvergence { passes, pair } => match pair {
                Some((a, b)) => {
                    write!(
                        f,
                        "SMO did not converge after {passes} passes on pair ({a}, {b})"
                    )
                }
                None => write!(f, "SMO did not converge after {passes} passes"),
            },
            ModelError::InvalidParam(msg) => write!(f, "invalid parameter: {msg}"),
        }
    }
}

impl std::error::Error for ModelError {}

pub(crate) fn sorted_distinct_labels(labels: &[u8]) -> Vec<u8> {
    let mut classes: Vec<u8> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    classes
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
