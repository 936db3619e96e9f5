//! Confusion matrices, binary per-user counts, threshold metrics, FAR/FRR and
//! ROC/AUC.
//!
//! Per-user evaluation runs against the union of all users' test sets: the
//! multiclass confusion matrix over that union is the source of every binary
//! count (a user's impostors are every other user's test samples). Metrics
//! whose denominator is zero are reported as explicitly undefined and
//! excluded from macro averages rather than silently zeroed.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::classifiers::{ClassScores, ModelError};

/// Row = true label, column = predicted label, over a fixed label set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<u8>,
    /// Row-major counts, `labels.len()` squared.
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    LengthMismatch { left: usize, right: usize },
    UnknownLabel(u8),
    DegenerateTruth,
    EmptyTestSet(u8),
    ScoreFailed(String),
    MalformedMatrix(String),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            EvalError::UnknownLabel(l) => write!(f, "label {l} is not in the label set"),
            EvalError::DegenerateTruth => {
                write!(f, "truth vector holds a single class; ROC needs both")
            }
            EvalError::EmptyTestSet(u) => write!(f, "user {u} has an empty test set"),
            EvalError::ScoreFailed(msg) => write!(f, "scoring failed: {msg}"),
            EvalError::MalformedMatrix(msg) => write!(f, "malformed confusion matrix: {msg}"),
        }
    }
}

impl std::error::Error for EvalError {}

impl From<ModelError> for EvalError {
    fn from(e: ModelError) -> Self {
        EvalError::ScoreFailed(e.to_string())
    }
}

impl ConfusionMatrix {
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    fn index_of(&self, label: u8) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn get(&self, true_label: u8, pred_label: u8) -> u64 {
        let i = self.index_of(true_label).expect("true label in set");
        let j = self.index_of(pred_label).expect("predicted label in set");
        self.counts[i * self.size() + j]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.size())
            .map(|i| self.counts[i * self.size() + i])
            .sum()
    }

    pub fn row_sum(&self, label: u8) -> u64 {
        let i = self.index_of(label).expect("label in set");
        self.counts[i * self.size()..(i + 1) * self.size()]
            .iter()
            .sum()
    }

    pub fn col_sum(&self, label: u8) -> u64 {
        let j = self.index_of(label).expect("label in set");
        (0..self.size())
            .map(|i| self.counts[i * self.size() + j])
            .sum()
    }

    /// Bracketed integer rows, right-aligned to a common width:
    /// `[[10  0]\n [ 0 10]]`.
    pub fn to_bracket_string(&self) -> String {
        let width = self
            .counts
            .iter()
            .map(|c| c.to_string().len())
            .max()
            .unwrap_or(1);
        let n = self.size();
        let mut out = String::new();
        for i in 0..n {
            out.push_str(if i == 0 { "[[" } else { " [" });
            for j in 0..n {
                if j > 0 {
                    out.push(' ');
                }
                out.push_str(&format!("{:>width$}", self.counts[i * n + j]));
            }
            out.push(']');
            if i == n - 1 {
                out.push(']');
            } else {
                out.push('\n');
            }
        }
        out
    }

    /// Parses the bracketed form back, against a known label set.
    pub fn from_bracket_str(text: &str, labels: &[u8]) -> Result<ConfusionMatrix, EvalError> {
        let n = labels.len();
        let cleaned: String = text
            .chars()
            .map(|c| if c == '[' || c == ']' { ' ' } else { c })
            .collect();
        let counts: Vec<u64> = cleaned
            .split_whitespace()
            .map(|tok| {
                tok.parse::<u64>()
                    .map_err(|_| EvalError::MalformedMatrix(format!("bad count `{tok}`")))
            })
            .collect::<Result<_, _>>()?;
        if counts.len() != n * n {
            return Err(EvalError::MalformedMatrix(format!(
                "{} entries for a {n}x{n} matrix",
                counts.len()
            )));
        }
        Ok(ConfusionMatrix {
            labels: labels.to_vec(),
            counts,
        })
    }
}

/// Builds the confusion matrix over a fixed label set.
pub fn confusion(
    y_true: &[u8],
    y_pred: &[u8],
    labels: &[u8],
) -> Result<ConfusionMatrix, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    let n = labels.len();
    let mut index = [usize::MAX; 256];
    for (i, &l) in labels.iter().enumerate() {
        index[l as usize] = i;
    }
    let mut counts = vec![0u64; n * n];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        let i = index[t as usize];
        if i == usize::MAX {
            return Err(EvalError::UnknownLabel(t));
        }
        let j = index[p as usize];
        if j == usize::MAX {
            return Err(EvalError::UnknownLabel(p));
        }
        counts[i * n + j] += 1;
    }
    Ok(ConfusionMatrix {
        labels: labels.to_vec(),
        counts,
    })
}

/// Binary counts for one authentic user against all impostors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_count: u64,
    pub tn: u64,
}

impl BinaryCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_count + self.tn
    }
}

/// Collapses the multiclass matrix to one-vs-rest counts for user `u`:
/// tp = m[u][u], fn = row(u) - tp, fp = col(u) - tp, tn = rest.
pub fn binarize_for_user(m: &ConfusionMatrix, u: u8) -> BinaryCounts {
    let tp = m.get(u, u);
    let fn_count = m.row_sum(u) - tp;
    let fp = m.col_sum(u) - tp;
    let tn = m.total() - tp - fn_count - fp;
    BinaryCounts {
        tp,
        fp,
        fn_count,
        tn,
    }
}

/// Threshold metrics; `None` marks a 0/0 case (undefined, excluded from
/// macro averages).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BasicMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub far: Option<f64>,
    pub frr: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

/// precision = TP/(TP+FP), recall = TP/(TP+FN), F1 = 2PR/(P+R),
/// accuracy = (TP+TN)/total, FAR = FP/(FP+TN), FRR = FN/(FN+TP).
pub fn basic_metrics(c: &BinaryCounts) -> BasicMetrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_count);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    BasicMetrics {
        precision,
        recall,
        f1,
        accuracy: ratio(c.tp + c.tn, c.total()),
        far: ratio(c.fp, c.fp + c.tn),
        frr: ratio(c.fn_count, c.fn_count + c.tp),
    }
}

/// One point of a ROC curve; points are produced in descending-threshold
/// order with non-decreasing tpr and fpr.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Sweeps thresholds over the distinct score values (descending, plus +inf),
/// processing all tied samples at one step; AUC by the trapezoidal rule.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Result<(Vec<RocPoint>, f64), EvalError> {
    if scores.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            left: scores.len(),
            right: truth.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::ScoreFailed("NaN score in ROC input".into()));
    }
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::DegenerateTruth);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("no NaN scores")
            .then(a.cmp(&b))
    });
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    let mut auc = 0.0;
    for w in points.windows(2) {
        auc += (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0;
    }
    Ok((points, auc))
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserEval {
    pub user: u8,
    pub counts: BinaryCounts,
    pub metrics: BasicMetrics,
    pub auc: f64,
    pub roc: Vec<RocPoint>,
}

/// How many users were excluded from each macro average because the metric
/// was undefined for them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndefinedCounts {
    pub precision: usize,
    pub recall: usize,
    pub f1: usize,
    pub accuracy: usize,
    pub far: usize,
    pub frr: usize,
}

/// Unweighted means over users (defined values only).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub far: Option<f64>,
    pub frr: Option<f64>,
    /// Mean of per-user AUCs.
    pub auc_macro: Option<f64>,
    /// One AUC over all (sample, user) score/truth pairs pooled.
    pub auc_pooled: Option<f64>,
    pub undefined: UndefinedCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEvaluation {
    /// Confusion matrix over the union of all users' test sets.
    pub confusion: ConfusionMatrix,
    /// Each user's own-test-set matrix, over the full label set.
    pub per_user_confusions: Vec<(u8, ConfusionMatrix)>,
    pub per_user: Vec<UserEval>,
    pub macro_metrics: MacroMetrics,
    /// Raw per-sample scores, per test set, for persistence and recomputation.
    pub scores: Vec<(u8, Vec<ClassScores>)>,
}

fn mean_defined(values: &[Option<f64>]) -> (Option<f64>, usize) {
    let defined: Vec<f64> = values.iter().copied().flatten().collect();
    let undefined = values.len() - defined.len();
    if defined.is_empty() {
        (None, undefined)
    } else {
        (
            Some(defined.iter().sum::<f64>() / defined.len() as f64),
            undefined,
        )
    }
}

/// Evaluates one model against every user's test set.
///
/// `labels` is the full label set of the experiment; each entry of `tests`
/// pairs a user with the feature rows of that user's test split (true label =
/// the user). `score_fn` maps one feature row to per-class scores.
pub fn evaluate_model<F>(
    labels: &[u8],
    tests: &[(u8, &[Vec<f64>])],
    mut score_fn: F,
) -> Result<ModelEvaluation, EvalError>
where
    F: FnMut(&[f64]) -> Result<ClassScores, ModelError>,
{
    for (user, rows) in tests {
        if rows.is_empty() {
            return Err(EvalError::EmptyTestSet(*user));
        }
    }
    let mut scores: Vec<(u8, Vec<ClassScores>)> = Vec::with_capacity(tests.len());
    let mut y_true: Vec<u8> = Vec::new();
    let mut y_pred: Vec<u8> = Vec::new();
    for (user, rows) in tests {
        let mut user_scores = Vec::with_capacity(rows.len());
        for row in rows.iter() {
            let s = score_fn(row)?;
            y_true.push(*user);
            y_pred.push(s.argmax());
            user_scores.push(s);
        }
        scores.push((*user, user_scores));
    }
    let union = confusion(&y_true, &y_pred, labels)?;

    let mut per_user_confusions = Vec::with_capacity(tests.len());
    let mut offset = 0;
    for (user, rows) in tests {
        let end = offset + rows.len();
        per_user_confusions.push((
            *user,
            confusion(&y_true[offset..end], &y_pred[offset..end], labels)?,
        ));
        offset = end;
    }

    let mut per_user = Vec::with_capacity(tests.len());
    let mut pooled_scores: Vec<f64> = Vec::new();
    let mut pooled_truth: Vec<bool> = Vec::new();
    for (user, _) in tests {
        let counts = binarize_for_user(&union, *user);
        let metrics = basic_metrics(&counts);
        let mut user_scores: Vec<f64> = Vec::with_capacity(y_true.len());
        let mut truth: Vec<bool> = Vec::with_capacity(y_true.len());
        for (set_user, set_scores) in &scores {
            for s in set_scores {
                user_scores.push(s.score_for(*user));
                truth.push(set_user == user);
            }
        }
        pooled_scores.extend(&user_scores);
        pooled_truth.extend(&truth);
        let (roc, auc) = roc_auc(&user_scores, &truth)?;
        per_user.push(UserEval {
            user: *user,
            counts,
            metrics,
            auc,
            roc,
        });
    }

    let collect = |f: fn(&BasicMetrics) -> Option<f64>| -> Vec<Option<f64>> {
        per_user.iter().map(|u| f(&u.metrics)).collect()
    };
    let (accuracy, acc_undef) = mean_defined(&collect(|m| m.accuracy));
    let (precision, prec_undef) = mean_defined(&collect(|m| m.precision));
    let (recall, rec_undef) = mean_defined(&collect(|m| m.recall));
    let (f1, f1_undef) = mean_defined(&collect(|m| m.f1));
    let (far, far_undef) = mean_defined(&collect(|m| m.far));
    let (frr, frr_undef) = mean_defined(&collect(|m| m.frr));
    let (auc_macro, _) = mean_defined(&per_user.iter().map(|u| Some(u.auc)).collect::<Vec<_>>());
    let auc_pooled = if tests.len() > 1 {
        Some(roc_auc(&pooled_scores, &pooled_truth)?.1)
    } else {
        None
    };
    let macro_metrics = MacroMetrics {
        accuracy,
        precision,
        recall,
        f1,
        far,
        frr,
        auc_macro,
        auc_pooled,
        undefined: UndefinedCounts {
            precision: prec_undef,
            recall: rec_undef,
            f1: f1_undef,
            accuracy: acc_undef,
            far: far_undef,
            frr: frr_undef,
        },
    };
    Ok(ModelEvaluation {
        confusion: union,
        per_user_confusions,
        per_user,
        macro_metrics,
        scores,
    })
}
