//! Stroke segmentation, kinematic feature derivation and train/test splits.
//!
//! A stroke is the sample sequence of one finger contact, identified by one
//! tracking id. Features are backward finite differences within a stroke:
//! component speeds and accelerations, their Euclidean magnitudes, scalar
//! jerk, chord direction (path tangent) and angular velocity. A row is
//! emitted only from the first sample index at which all nine features are
//! defined, so strokes with fewer than four samples emit nothing.

use std::f64::consts::{PI, TAU};
use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::FeatureMatrix;
use crate::preprocess::CleanSample;

/// Feature CSV columns, in file order (the user label column comes last).
pub const FEATURE_COLUMNS: [&str; 10] = [
    "Timestamp",
    "X_Speed",
    "X_Acceleration",
    "Y_Speed",
    "Y_Acceleration",
    "Speed",
    "Acceleration",
    "Jerk",
    "Ang_V",
    "Path_Tangent",
];

/// Minimum feature rows a user needs before splitting.
pub const MIN_ROWS_PER_USER: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrokeSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// One contact's ordered samples, timestamps strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Stroke {
    pub tracking_id: i64,
    pub user: u8,
    pub samples: Vec<StrokeSample>,
}

impl Stroke {
    /// Builds a stroke from time-ordered samples, collapsing equal-timestamp
    /// duplicates (keeping the last). Returns the collapsed count.
    pub fn from_samples(
        tracking_id: i64,
        user: u8,
        samples: impl IntoIterator<Item = StrokeSample>,
    ) -> (Stroke, usize) {
        let mut out: Vec<StrokeSample> = Vec::new();
        let mut collapsed = 0;
        for s in samples {
            match out.last_mut() {
                Some(last) if last.t == s.t => {
                    *last = s;
                    collapsed += 1;
                }
                _ => out.push(s),
            }
        }
        (
            Stroke {
                tracking_id,
                user,
                samples: out,
            },
            collapsed,
        )
    }
}

/// One standardizable kinematic sample in the feature-file schema.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRow {
    pub timestamp: f64,
    pub x_speed: f64,
    pub x_acceleration: f64,
    pub y_speed: f64,
    pub y_acceleration: f64,
    pub speed: f64,
    pub acceleration: f64,
    pub jerk: f64,
    pub ang_v: f64,
    pub path_tangent: f64,
    pub user: u8,
}

impl FeatureRow {
    /// Values in [`FEATURE_COLUMNS`] order.
    pub fn to_vector(&self) -> Vec<f64> {
        vec![
            self.timestamp,
            self.x_speed,
            self.x_acceleration,
            self.y_speed,
            self.y_acceleration,
            self.speed,
            self.acceleration,
            self.jerk,
            self.ang_v,
            self.path_tangent,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KinematicsError {
    /// A non-increasing timestamp interval survived stroke construction.
    DegenerateInterval {
        tracking_id: i64,
        index: usize,
    },
    InsufficientData {
        user: u8,
        rows: usize,
        needed: usize,
    },
    MalformedCsv {
        line: usize,
        message: String,
    },
}

impl fmt::Display for KinematicsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KinematicsError::DegenerateInterval { tracking_id, index } => {
                write!(
                    f,
                    "non-positive time step at sample {index} of stroke {tracking_id}"
                )
            }
            KinematicsError::InsufficientData { user, rows, needed } => {
                write!(
                    f,
                    "user {user} has {rows} feature rows, needs at least {needed}"
                )
            }
            KinematicsError::MalformedCsv { line, message } => {
                write!(f, "malformed feature CSV line {line}: {message}")
            }
        }
    }
}

impl std::error::Error for KinematicsError {}

/// Splits cleaned, sorted samples into one stroke per distinct tracking id.
/// Returns the strokes and the number of equal-timestamp duplicates collapsed.
pub fn segment_strokes(samples: &[CleanSample]) -> (Vec<Stroke>, usize) {
    let mut strokes = Vec::new();
    let mut collapsed_total = 0;
    let mut i = 0;
    while i < samples.len() {
        let id = samples[i].tracking_id;
        let user = samples[i].user;
        let mut j = i;
        while j < samples.len() && samples[j].tracking_id == id {
            j += 1;
        }
        let (stroke, collapsed) = Stroke::from_samples(
            id,
            user,
            samples[i..j].iter().map(|s| StrokeSample {
                t: s.timestamp,
                x: s.x,
                y: s.y,
            }),
        );
        collapsed_total += collapsed;
        strokes.push(stroke);
        i = j;
    }
    (strokes, collapsed_total)
}

/// Wraps an angle difference into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

fn normalize_tangent(a: f64) -> f64 {
    if a == -PI {
        PI
    } else {
        a
    }
}

/// Derives the nine kinematic features over one stroke using backward
/// differences. Rows are emitted from sample index 3 onward (the first index
/// at which jerk is defined); shorter strokes emit nothing.
pub fn extract_features(stroke: &Stroke) -> Result<Vec<FeatureRow>, KinematicsError> {
    let s = &stroke.samples;
    if s.len() < 4 {
        return Ok(Vec::new());
    }
    let mut rows = Vec::with_capacity(s.len() - 3);
    let mut prev_vx = 0.0;
    let mut prev_vy = 0.0;
    let mut prev_tangent = 0.0;
    let mut prev_acc = 0.0;
    for i in 1..s.len() {
        let dt = s[i].t - s[i - 1].t;
        if dt <= 0.0 {
            return Err(KinematicsError::DegenerateInterval {
                tracking_id: stroke.tracking_id,
                index: i,
            });
        }
        let dx = s[i].x - s[i - 1].x;
        let dy = s[i].y - s[i - 1].y;
        let vx = dx / dt;
        let vy = dy / dt;
        let speed = vx.hypot(vy);
        let tangent = normalize_tangent(dy.atan2(dx));
        if i >= 2 {
            let ax = (vx - prev_vx) / dt;
            let ay = (vy - prev_vy) / dt;
            let acc = ax.hypot(ay);
            let ang_v = wrap_angle(tangent - prev_tangent) / dt;
            if i >= 3 {
                let jerk = (acc - prev_acc) / dt;
                rows.push(FeatureRow {
                    timestamp: s[i].t,
                    x_speed: vx,
                    x_acceleration: ax,
                    y_speed: vy,
                    y_acceleration: ay,
                    speed,
                    acceleration: acc,
                    jerk,
                    ang_v,
                    path_tangent: tangent,
                    user: stroke.user,
                });
            }
            prev_acc = acc;
        }
        prev_vx = vx;
        prev_vy = vy;
        prev_tangent = tangent;
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitMode {
    Chronological,
    Shuffled { seed: u64 },
}

impl Default for SplitMode {
    fn default() -> Self {
        SplitMode::Chronological
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    #[serde(default)]
    pub mode: SplitMode,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.70,
            mode: SplitMode::Chronological,
        }
    }
}

/// A feature matrix with its user labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub matrix: FeatureMatrix,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSplitSizes {
    pub user: u8,
    pub n_total: usize,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitSummary {
    pub per_user: Vec<UserSplitSizes>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutput {
    /// Shared training set over all users.
    pub train: LabeledSet,
    /// Per-user held-out test sets.
    pub tests: Vec<(u8, LabeledSet)>,
    pub summary: SplitSummary,
}

/// Converts feature rows to a matrix in [`FEATURE_COLUMNS`] order.
pub fn to_matrix(rows: &[FeatureRow]) -> FeatureMatrix {
    FeatureMatrix {
        columns: FEATURE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows: rows.iter().map(|r| r.to_vector()).collect(),
    }
}

fn golden_sub_seed(seed: u64, unit: u64) -> u64 {
    seed.wrapping_add(unit.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Builds the shared training set and per-user test sets: per user, the first
/// `train_fraction` (chronological order, or a seeded shuffle) goes to
/// training, the remainder to that user's test set.
pub fn build_splits(
    per_user: &[(u8, Vec<FeatureRow>)],
    spec: &SplitSpec,
) -> Result<SplitOutput, KinematicsError> {
    for (user, rows) in per_user {
        if rows.len() < MIN_ROWS_PER_USER {
            return Err(KinematicsError::InsufficientData {
                user: *user,
                rows: rows.len(),
                needed: MIN_ROWS_PER_USER,
            });
        }
    }
    let columns: Vec<String> = FEATURE_COLUMNS.iter().map(|s| s.to_string()).collect();
    let mut train_rows = Vec::new();
    let mut train_labels = Vec::new();
    let mut tests = Vec::new();
    let mut summary = SplitSummary::default();
    for (user, rows) in per_user {
        let n = rows.len();
        let mut order: Vec<usize> = (0..n).collect();
        match spec.mode {
            SplitMode::Chronological => {
                order.sort_by(|&a, &b| {
                    rows[a]
                        .timestamp
                        .partial_cmp(&rows[b].timestamp)
                        .expect("feature timestamps are finite")
                });
            }
            SplitMode::Shuffled { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(golden_sub_seed(seed, *user as u64));
                for i in (1..n).rev() {
                    let j = rng.gen_range(0..=i);
                    order.swap(i, j);
                }
            }
        }
        let n_train = ((spec.train_fraction * n as f64).round() as usize).min(n);
        for &idx in &order[..n_train] {
            train_rows.push(rows[idx].to_vector());
            train_labels.push(*user);
        }
        let mut test_rows = Vec::new();
        let mut test_labels = Vec::new();
        for &idx in &order[n_train..] {
            test_rows.push(rows[idx].to_vector());
            test_labels.push(*user);
        }
        summary.per_user.push(UserSplitSizes {
            user: *user,
            n_total: n,
            n_train,
            n_test: n - n_train,
        });
        tests.push((
            *user,
            LabeledSet {
                matrix: FeatureMatrix {
                    columns: columns.clone(),
                    rows: test_rows,
                },
                labels: test_labels,
            },
        ));
    }
    Ok(SplitOutput {
        train: LabeledSet {
            matrix: FeatureMatrix {
                columns,
                rows: train_rows,
            },
            labels: train_labels,
        },
        tests,
        summary,
    })
}

/// Renders feature rows as CSV with the canonical header plus `User`.
pub fn feature_csv_string(rows: &[FeatureRow]) -> String {
    let mut out = String::new();
    out.push_str(&FEATURE_COLUMNS.join(","));
    out.push_str(",User\n");
    for r in rows {
        let v = r.to_vector();
        let cells: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
        out.push_str(&cells.join(","));
        out.push_str(&format!(",{}\n", r.user));
    }
    out
}

/// Parses feature CSV text written by [`feature_csv_string`].
pub fn parse_feature_csv(text: &str) -> Result<Vec<FeatureRow>, KinematicsError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(KinematicsError::MalformedCsv {
        line: 1,
        message: "empty file".into(),
    })?;
    let expected = format!("{},User", FEATURE_COLUMNS.join(","));
    if header.trim_end_matches('\r') != expected {
        return Err(KinematicsError::MalformedCsv {
            line: 1,
            message: format!("header `{header}` does not match `{expected}`"),
        });
    }
    let mut rows = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 11 {
            return Err(KinematicsError::MalformedCsv {
                line: line_no,
                message: format!("expected 11 cells, found {}", cells.len()),
            });
        }
        let mut nums = [0.0f64; 10];
        for (slot, cell) in nums.iter_mut().zip(&cells[..10]) {
            *slot = cell
                .trim()
                .parse()
                .map_err(|_| KinematicsError::MalformedCsv {
                    line: line_no,
                    message: format!("bad numeric cell `{cell}`"),
                })?;
        }
        let user: u8 = cells[10]
            .trim()
            .parse()
            .map_err(|_| KinematicsError::MalformedCsv {
                line: line_no,
                message: format!("bad user label `{}`", cells[10]),
            })?;
        rows.push(FeatureRow {
            timestamp: nums[0],
            x_speed: nums[1],
            x_acceleration: nums[2],
            y_speed: nums[3],
            y_acceleration: nums[4],
            speed: nums[5],
            acceleration: nums[6],
            jerk: nums[7],
            ang_v: nums[8],
            path_tangent: nums[9],
            user,
        });
    }
    Ok(rows)
}
