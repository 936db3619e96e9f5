//! Brute-force k-nearest-neighbors over standardized features.
//!
//! Distances are Euclidean; ties at the k-th distance break toward the lower
//! training index, argmax ties toward the lowest label. Both rules exist so
//! a refit on equal inputs reproduces equal predictions.

use serde::{Deserialize, Serialize};

use super::{sorted_distinct_labels, squared_distance, ClassScores, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    data: Vec<Vec<f64>>,
    labels: Vec<u8>,
    classes: Vec<u8>,
    k: usize,
}

impl KnnModel {
    pub fn fit(data: Vec<Vec<f64>>, labels: Vec<u8>, k: usize) -> Result<Self, ModelError> {
        if data.is_empty() {
            return Err(ModelError::InsufficientData("no training rows".into()));
        }
        if data.len() != labels.len() {
            return Err(ModelError::InvalidParam(format!(
                "{} rows but {} labels",
                data.len(),
                labels.len()
            )));
        }
        if k == 0 || k > data.len() {
            return Err(ModelError::InvalidParam(format!(
                "k={k} must be in 1..={}",
                data.len()
            )));
        }
        let d = data[0].len();
        if data.iter().any(|r| r.len() != d) {
            return Err(ModelError::InvalidParam("ragged training matrix".into()));
        }
        let classes = sorted_distinct_labels(&labels);
        Ok(KnnModel {
            data,
            labels,
            classes,
            k,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_features(&self) -> usize {
        self.data[0].len()
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    /// Labels of the `k` nearest training points, nearest first.
    fn neighbor_labels(&self, query: &[f64], k: usize) -> Result<Vec<u8>, ModelError> {
        if query.len() != self.n_features() {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_features(),
                got: query.len(),
            });
        }
        let mut order: Vec<(f64, usize)> = self
            .data
            .iter()
            .enumerate()
            .map(|(i, row)| (squared_distance(row, query), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            a.0.partial_cmp(&b.0)
                .expect("distances are finite")
                .then(a.1.cmp(&b.1))
        };
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, cmp);
            order.truncate(k);
        }
        order.sort_by(cmp);
        Ok(order.into_iter().map(|(_, i)| self.labels[i]).collect())
    }

    fn scores_from_neighbors(&self, neighbors: &[u8], k: usize) -> ClassScores {
        let mut scores = vec![0.0; self.classes.len()];
        for label in &neighbors[..k] {
            let idx = self
                .classes
                .binary_search(label)
                .expect("label seen at fit time");
            scores[idx] += 1.0;
        }
        for s in scores.iter_mut() {
            *s /= k as f64;
        }
        ClassScores {
            labels: self.classes.clone(),
            scores,
        }
    }

    /// Fraction of the k nearest neighbors per class.
    pub fn predict(&self, query: &[f64]) -> Result<ClassScores, ModelError> {
        let neighbors = self.neighbor_labels(query, self.k)?;
        Ok(self.scores_from_neighbors(&neighbors, self.k))
    }
}

/// Error rate against `validation` for each k in `k_range`, for elbow plots.
///
/// The neighbor ranking is computed once per validation point up to the
/// largest k, then reused for every k; the result equals running
/// `KnnModel::predict` at each k separately.
pub fn elbow_curve(
    train: (Vec<Vec<f64>>, Vec<u8>),
    validation: (&[Vec<f64>], &[u8]),
    k_range: &[usize],
) -> Result<Vec<(usize, f64)>, ModelError> {
    if k_range.is_empty() {
        return Err(ModelError::InvalidParam("empty k range".into()));
    }
    let max_k = *k_range.iter().max().expect("non-empty");
    let model = KnnModel::fit(train.0, train.1, max_k)?;
    let (vx, vy) = validation;
    if vx.len() != vy.len() {
        return Err(ModelError::InvalidParam(format!(
            "{} validation rows but {} labels",
            vx.len(),
            vy.len()
        )));
    }
    let neighbor_lists: Vec<Vec<u8>> = vx
        .iter()
        .map(|q| model.neighbor_labels(q, max_k))
        .collect::<Result<_, _>>()?;
    let mut curve = Vec::with_capacity(k_range.len());
    for &k in k_range {
        if k == 0 || k > max_k {
            return Err(ModelError::InvalidParam(format!("k={k} out of range")));
        }
        let mut wrong = 0usize;
        for (neighbors, truth) in neighbor_lists.iter().zip(vy) {
            if model.scores_from_neighbors(neighbors, k).argmax() != *truth {
                wrong += 1;
            }
        }
        curve.push((k, wrong as f64 / vx.len() as f64));
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_model(k: usize) -> KnnModel {
        let data = vec![
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![1.0, 1.0],
            vec![5.0, 5.0],
            vec![5.1, 5.0],
        ];
        let labels = vec![1, 1, 2, 3, 3];
        KnnModel::fit(data, labels, k).unwrap()
    }

    #[test]
    fn zero_distance_neighbor_wins_at_k1() {
        let model = demo_model(1);
        let scores = model.predict(&[1.0, 1.0]).unwrap();
        assert_eq!(scores.argmax(), 2);
        assert_eq!(scores.score_for(2), 1.0);
    }

    #[test]
    fn vote_fractions_from_nearest_labels() {
        // k=3 with nearest labels [1, 1, 2] classifies as 1.
        let model = demo_model(3);
        let scores = model.predict(&[0.2, 0.1]).unwrap();
        assert_eq!(scores.argmax(), 1);
        assert!((scores.score_for(1) - 2.0 / 3.0).abs() < 1e-12);
        assert!((scores.score_for(2) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn distance_ties_break_by_training_index() {
        let data = vec![vec![1.0], vec![-1.0], vec![1.0]];
        let model = KnnModel::fit(data, vec![5, 6, 7], 1).unwrap();
        // Query at 0 is equidistant from all three; index 0 wins.
        let scores = model.predict(&[0.0]).unwrap();
        assert_eq!(scores.argmax(), 5);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let model = demo_model(1);
        assert!(matches!(
            model.predict(&[0.0]),
            Err(ModelError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn k_bounds_validated() {
        assert!(matches!(
            KnnModel::fit(vec![vec![0.0]], vec![1], 2),
            Err(ModelError::InvalidParam(_))
        ));
        assert!(matches!(
            KnnModel::fit(vec![vec![0.0]], vec![1], 0),
            Err(ModelError::InvalidParam(_))
        ));
    }

    #[test]
    fn elbow_error_zero_when_validating_on_train_at_k1() {
        let data = vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]];
        let labels = vec![1u8, 1, 2, 2];
        let curve =
            elbow_curve((data.clone(), labels.clone()), (&data, &labels), &[1, 2, 3]).unwrap();
        assert_eq!(curve[0], (1, 0.0));
    }

    #[test]
    fn elbow_zero_for_separated_clusters() {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            data.push(vec![i as f64 * 0.01, 0.0]);
            labels.push(1u8);
            data.push(vec![100.0 + i as f64 * 0.01, 0.0]);
            labels.push(2u8);
        }
        let val_x = vec![vec![0.05, 0.0], vec![100.05, 0.0]];
        let val_y = vec![1u8, 2];
        let curve = elbow_curve((data, labels), (&val_x, &val_y), &[1, 2, 3, 4, 5]).unwrap();
        assert!(curve.iter().all(|(_, err)| *err == 0.0));
    }
}
