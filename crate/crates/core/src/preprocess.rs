//! Cleaning of raw metric rows and z-score standardization.
//!
//! Cleaning applies, in order: removal of rows carrying the -420 coordinate
//! sentinel, numeric encoding of the touch state, removal of rows with any
//! missing marker, and a stable sort by (tracking_id, timestamp). Each rule
//! reports how many rows it dropped.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::ingest::{TouchMetricRow, COORD_SENTINEL};
use crate::matrix::FeatureMatrix;

/// A fully validated sample: no missing values, no coordinate sentinels,
/// touch state encoded numerically (Down=0, Held=1, Up=2).
#[derive(Debug, Clone, PartialEq)]
pub struct CleanSample {
    pub timestamp: f64,
    pub x: f64,
    pub y: f64,
    pub btn_touch: f64,
    pub touch_major: f64,
    pub touch_minor: f64,
    pub tracking_id: i64,
    pub pressure: f64,
    pub finger: u8,
    pub user: u8,
}

/// Rows dropped per cleaning rule, for the run report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    pub total_in: usize,
    pub sentinel_xy: usize,
    pub missing: usize,
    pub kept: usize,
}

impl DropCounts {
    pub fn add(&mut self, other: &DropCounts) {
        self.total_in += other.total_in;
        self.sentinel_xy += other.sentinel_xy;
        self.missing += other.missing;
        self.kept += other.kept;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PreprocessError {
    EmptyInput,
    ColumnMismatch {
        expected: Vec<String>,
        got: Vec<String>,
    },
}

impl fmt::Display for PreprocessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PreprocessError::EmptyInput => write!(f, "cannot fit a scaler on an empty matrix"),
            PreprocessError::ColumnMismatch { expected, got } => {
                write!(
                    f,
                    "scaler columns {expected:?} do not match matrix columns {got:?}"
                )
            }
        }
    }
}

impl std::error::Error for PreprocessError {}

/// Cleans one user's rows. Total: an all-dropped input yields an empty
/// sequence plus its drop counts.
pub fn clean_rows(rows: &[TouchMetricRow]) -> (Vec<CleanSample>, DropCounts) {
    let (kept, _, counts) = clean_rows_traced(rows);
    (kept, counts)
}

/// As [`clean_rows`], also returning the source row index of every kept
/// sample (the audit trail the pipeline persists).
pub fn clean_rows_traced(rows: &[TouchMetricRow]) -> (Vec<CleanSample>, Vec<usize>, DropCounts) {
    let mut counts = DropCounts {
        total_in: rows.len(),
        ..DropCounts::default()
    };
    let mut kept: Vec<(CleanSample, usize)> = Vec::with_capacity(rows.len());
    for (index, row) in rows.iter().enumerate() {
        if row.x == COORD_SENTINEL || row.y == COORD_SENTINEL {
            counts.sentinel_xy += 1;
            continue;
        }
        if row.has_missing() {
            counts.missing += 1;
            continue;
        }
        kept.push((
            CleanSample {
                timestamp: row.timestamp,
                x: row.x,
                y: row.y,
                btn_touch: row.btn_touch.expect("checked by has_missing").as_numeric(),
                touch_major: row.touch_major,
                touch_minor: row.touch_minor,
                tracking_id: row.tracking_id,
                pressure: row.pressure,
                finger: row.finger,
                user: row.user,
            },
            index,
        ));
    }
    // Stable: equal (tracking_id, timestamp) keys keep their input order.
    kept.sort_by(|a, b| {
        a.0.tracking_id.cmp(&b.0.tracking_id).then(
            a.0.timestamp
                .partial_cmp(&b.0.timestamp)
                .expect("missing rows were removed"),
        )
    });
    counts.kept = kept.len();
    let (samples, sources) = kept.into_iter().unzip();
    (samples, sources, counts)
}

/// Per-column z-score parameters. `scale` is the population standard
/// deviation, with 1.0 substituted for constant columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Fits per-column mean and population standard deviation (divisor n).
pub fn fit_scaler(matrix: &FeatureMatrix) -> Result<ScalerParams, PreprocessError> {
    let n = matrix.n_rows();
    if n == 0 {
        return Err(PreprocessError::EmptyInput);
    }
    let d = matrix.n_cols();
    let mut mean = vec![0.0; d];
    for row in &matrix.rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for row in &matrix.rows {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let dv = v - m;
            *s += dv * dv;
        }
    }
    let scale = var
        .iter()
        .map(|&s| {
            let sd = (s / n as f64).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    Ok(ScalerParams {
        columns: matrix.columns.clone(),
        mean,
        scale,
    })
}

/// Applies `(x - mean) / scale` column-wise.
pub fn apply_scaler(
    params: &ScalerParams,
    matrix: &FeatureMatrix,
) -> Result<FeatureMatrix, PreprocessError> {
    if params.columns != matrix.columns {
        return Err(PreprocessError::ColumnMismatch {
            expected: params.columns.clone(),
            got: matrix.columns.clone(),
        });
    }
    let rows = matrix
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .zip(&params.mean)
                .zip(&params.scale)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        })
        .collect();
    Ok(FeatureMatrix {
        columns: matrix.columns.clone(),
        rows,
    })
}

/// Inverts the standardization (`x * scale + mean`).
pub fn invert_scaler(
    params: &ScalerParams,
    matrix: &FeatureMatrix,
) -> Result<FeatureMatrix, PreprocessError> {
    if params.columns != matrix.columns {
        return Err(PreprocessError::ColumnMismatch {
            expected: params.columns.clone(),
            got: matrix.columns.clone(),
        });
    }
    let rows = matrix
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .zip(&params.mean)
                .zip(&params.scale)
                .map(|((v, m), s)| v * s + m)
                .collect()
        })
        .collect();
    Ok(FeatureMatrix {
        columns: matrix.columns.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::BtnTouch;

    fn row(tracking_id: i64, ts: f64, x: f64, y: f64) -> TouchMetricRow {
        TouchMetricRow {
            timestamp: ts,
            x,
            y,
            btn_touch: Some(BtnTouch::Held),
            touch_major: 5.0,
            touch_minor: 4.0,
            tracking_id,
            pressure: 30.0,
            finger: 0,
            user: 1,
        }
    }

    #[test]
    fn sentinel_rows_removed() {
        let rows = vec![
            row(1, 0.0, -420.0, 10.0),
            row(1, 0.1, 10.0, -420.0),
            row(1, 0.2, 10.0, 10.0),
        ];
        let (clean, counts) = clean_rows(&rows);
        assert_eq!(clean.len(), 1);
        assert_eq!(counts.sentinel_xy, 2);
        assert_eq!(counts.missing, 0);
        assert_eq!(counts.kept, 1);
    }

    #[test]
    fn missing_rows_removed_and_counted() {
        let mut bad = row(1, 0.0, 1.0, 2.0);
        bad.pressure = f64::NAN;
        let mut no_btn = row(1, 0.1, 1.0, 2.0);
        no_btn.btn_touch = None;
        let rows = vec![bad, no_btn, row(1, 0.2, 3.0, 4.0)];
        let (clean, counts) = clean_rows(&rows);
        assert_eq!(clean.len(), 1);
        assert_eq!(counts.missing, 2);
    }

    #[test]
    fn empty_input_total() {
        let (clean, counts) = clean_rows(&[]);
        assert!(clean.is_empty());
        assert_eq!(counts, DropCounts::default());
    }

    #[test]
    fn btn_touch_encoded_numerically() {
        let mut down = row(1, 0.0, 1.0, 1.0);
        down.btn_touch = Some(BtnTouch::Down);
        let mut up = row(1, 0.2, 1.0, 1.0);
        up.btn_touch = Some(BtnTouch::Up);
        let (clean, _) = clean_rows(&[down, row(1, 0.1, 1.0, 1.0), up]);
        assert_eq!(
            clean.iter().map(|s| s.btn_touch).collect::<Vec<_>>(),
            vec![0.0, 1.0, 2.0]
        );
    }

    #[test]
    fn trace_points_back_at_the_surviving_source_rows() {
        let rows = vec![
            row(9, 0.3, 1.0, 1.0),
            row(7, 0.2, -420.0, 1.0),
            row(7, 0.1, 2.0, 2.0),
        ];
        let (clean, trace, _) = clean_rows_traced(&rows);
        assert_eq!(trace, vec![2, 0]);
        for (sample, &src) in clean.iter().zip(&trace) {
            assert_eq!(sample.timestamp, rows[src].timestamp);
            assert_eq!(sample.tracking_id, rows[src].tracking_id);
        }
    }

    #[test]
    fn output_sorted_by_tracking_then_time() {
        let rows = vec![
            row(9, 0.3, 1.0, 1.0),
            row(7, 0.2, 1.0, 1.0),
            row(7, 0.1, 1.0, 1.0),
        ];
        let (clean, _) = clean_rows(&rows);
        let keys: Vec<(i64, f64)> = clean.iter().map(|s| (s.tracking_id, s.timestamp)).collect();
        assert_eq!(keys, vec![(7, 0.1), (7, 0.2), (9, 0.3)]);
    }

    #[test]
    fn cleaning_is_idempotent() {
        let rows = vec![
            row(2, 0.5, 4.0, 4.0),
            row(1, 0.2, 1.0, 1.0),
            row(1, 0.1, -420.0, 1.0),
            row(2, 0.4, 3.0, 3.0),
        ];
        let (once, _) = clean_rows(&rows);
        // Convert back to raw rows and clean again.
        let raw: Vec<TouchMetricRow> = once
            .iter()
            .map(|s| TouchMetricRow {
                timestamp: s.timestamp,
                x: s.x,
                y: s.y,
                btn_touch: Some(match s.btn_touch as u8 {
                    0 => BtnTouch::Down,
                    1 => BtnTouch::Held,
                    _ => BtnTouch::Up,
                }),
                touch_major: s.touch_major,
                touch_minor: s.touch_minor,
                tracking_id: s.tracking_id,
                pressure: s.pressure,
                finger: s.finger,
                user: s.user,
            })
            .collect();
        let (twice, counts) = clean_rows(&raw);
        assert_eq!(once, twice);
        assert_eq!(counts.sentinel_xy + counts.missing, 0);
    }

    fn single_column(values: &[f64]) -> FeatureMatrix {
        FeatureMatrix::new(vec!["v".into()], values.iter().map(|&v| vec![v]).collect()).unwrap()
    }

    #[test]
    fn scaler_closed_form_example() {
        let params = fit_scaler(&single_column(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(params.mean, vec![2.0]);
        assert!((params.scale[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((params.scale[0] - 0.8164965809).abs() < 1e-9);
    }

    #[test]
    fn constant_column_gets_unit_scale() {
        let params = fit_scaler(&single_column(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(params.mean, vec![5.0]);
        assert_eq!(params.scale, vec![1.0]);
    }

    #[test]
    fn empty_matrix_rejected() {
        let err = fit_scaler(&FeatureMatrix::empty(vec!["v".into()])).unwrap_err();
        assert_eq!(err, PreprocessError::EmptyInput);
    }

    #[test]
    fn apply_centers_the_fit_value() {
        let m = single_column(&[1.0, 2.0, 3.0]);
        let params = fit_scaler(&m).unwrap();
        let scaled = apply_scaler(&params, &m).unwrap();
        assert!(scaled.rows[1][0].abs() < 1e-15);
    }

    #[test]
    fn apply_rejects_column_mismatch() {
        let m = single_column(&[1.0, 2.0]);
        let params = fit_scaler(&m).unwrap();
        let other = FeatureMatrix::new(vec!["w".into()], vec![vec![1.0]]).unwrap();
        assert!(matches!(
            apply_scaler(&params, &other),
            Err(PreprocessError::ColumnMismatch { .. })
        ));
    }

    #[test]
    fn apply_then_invert_recovers_input() {
        let m = FeatureMatrix::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.5, -3.0], vec![2.5, 9.0], vec![-0.5, 6.0]],
        )
        .unwrap();
        let params = fit_scaler(&m).unwrap();
        let round = invert_scaler(&params, &apply_scaler(&params, &m).unwrap()).unwrap();
        for (a, b) in m.rows.iter().flatten().zip(round.rows.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn train_fit_params_shift_on_held_out_data() {
        // Train on low values, apply to a deliberately shifted test split.
        let train = single_column(&[0.0, 1.0, 2.0, 3.0]);
        let test = single_column(&[10.0, 11.0, 12.0]);
        let params = fit_scaler(&train).unwrap();
        let scaled = apply_scaler(&params, &test).unwrap();
        let mean: f64 = scaled.column(0).sum::<f64>() / 3.0;
        assert!(mean.abs() > 1.0);
    }
}
