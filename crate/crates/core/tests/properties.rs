//! Property tests for the invariants the pipeline relies on.

use proptest::prelude::*;

use touchauth_core::evaluation::roc_auc;
use touchauth_core::ingest::{BtnTouch, TouchMetricRow};
use touchauth_core::kinematics::{extract_features, Stroke, StrokeSample};
use touchauth_core::matrix::FeatureMatrix;
use touchauth_core::preprocess::{
    apply_scaler, clean_rows, fit_scaler, invert_scaler, CleanSample,
};

fn arb_row() -> impl Strategy<Value = TouchMetricRow> {
    (
        0.0f64..100.0,
        prop_oneof![Just(-420.0f64), 0.0f64..1200.0],
        prop_oneof![Just(-420.0f64), 0.0f64..1900.0],
        prop_oneof![
            Just(None),
            Just(Some(BtnTouch::Down)),
            Just(Some(BtnTouch::Held)),
            Just(Some(BtnTouch::Up))
        ],
        prop_oneof![Just(f64::NAN), 0.0f64..20.0],
        0i64..6,
        0u8..2,
    )
        .prop_map(
            |(timestamp, x, y, btn_touch, major, tracking_id, finger)| TouchMetricRow {
                timestamp,
                x,
                y,
                btn_touch,
                touch_major: major,
                touch_minor: 3.0,
                tracking_id,
                pressure: 25.0,
                finger,
                user: 1,
            },
        )
}

fn back_to_raw(s: &CleanSample) -> TouchMetricRow {
    TouchMetricRow {
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
    }
}

proptest! {
    #[test]
    fn cleaning_is_idempotent_and_total(rows in prop::collection::vec(arb_row(), 0..80)) {
        let (once, counts) = clean_rows(&rows);
        prop_assert_eq!(counts.total_in, rows.len());
        prop_assert_eq!(counts.kept + counts.sentinel_xy + counts.missing, rows.len());
        let raw: Vec<TouchMetricRow> = once.iter().map(back_to_raw).collect();
        let (twice, second_counts) = clean_rows(&raw);
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(second_counts.sentinel_xy + second_counts.missing, 0);
        // Sorted by (tracking_id, timestamp).
        for w in once.windows(2) {
            prop_assert!(
                (w[0].tracking_id, w[0].timestamp) <= (w[1].tracking_id, w[1].timestamp)
            );
        }
    }

    #[test]
    fn cleaning_shuffled_clean_input_is_canonical(
        keys in prop::collection::vec((0i64..8, 0u32..10_000), 2..60),
        shuffle_seed in any::<u64>(),
    ) {
        // Distinct (tracking_id, timestamp) keys: the sort is canonical, so a
        // shuffled copy cleans to the identical sequence.
        let mut seen = std::collections::HashSet::new();
        let rows: Vec<TouchMetricRow> = keys
            .iter()
            .filter(|k| seen.insert(**k))
            .map(|&(tid, ts)| TouchMetricRow {
                timestamp: ts as f64 * 0.01,
                x: (tid * 31 + ts as i64) as f64,
                y: 1.0,
                btn_touch: Some(BtnTouch::Held),
                touch_major: 5.0,
                touch_minor: 4.0,
                tracking_id: tid,
                pressure: 30.0,
                finger: 0,
                user: 1,
            })
            .collect();
        let mut shuffled = rows.clone();
        let mut state = shuffle_seed | 1;
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            shuffled.swap(i, (state as usize) % (i + 1));
        }
        let (a, _) = clean_rows(&rows);
        let (b, _) = clean_rows(&shuffled);
        prop_assert_eq!(&a, &b);
        // Independent sort oracle over the keys.
        let mut oracle: Vec<(i64, f64)> =
            rows.iter().map(|r| (r.tracking_id, r.timestamp)).collect();
        oracle.sort_by(|p, q| p.0.cmp(&q.0).then(p.1.partial_cmp(&q.1).unwrap()));
        let got: Vec<(i64, f64)> = a.iter().map(|s| (s.tracking_id, s.timestamp)).collect();
        prop_assert_eq!(got, oracle);
    }

    #[test]
    fn standardization_is_invertible_and_centers(
        cols in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 5..30), 1..4)
    ) {
        let n = cols.iter().map(|c| c.len()).min().unwrap();
        let names: Vec<String> = (0..cols.len()).map(|i| format!("c{i}")).collect();
        let rows: Vec<Vec<f64>> = (0..n).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
        let m = FeatureMatrix::new(names, rows).unwrap();
        let params = fit_scaler(&m).unwrap();
        let scaled = apply_scaler(&params, &m).unwrap();
        for c in 0..m.n_cols() {
            let mean: f64 = scaled.column(c).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() <= 1e-9, "column {} mean {}", c, mean);
            let var: f64 = scaled.column(c).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let constant = m.column(c).all(|v| v == m.rows[0][c]);
            if !constant {
                prop_assert!((var - 1.0).abs() <= 1e-6, "column {} var {}", c, var);
            }
        }
        let back = invert_scaler(&params, &scaled).unwrap();
        for (a, b) in m.rows.iter().flatten().zip(back.rows.iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn features_are_translation_invariant(
        points in prop::collection::vec((-500i32..500, -500i32..500), 5..20),
        dx in -1000i32..1000,
        dy in -1000i32..1000,
    ) {
        // Integer coordinates make the shifted differences exact.
        let base: Vec<StrokeSample> = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| StrokeSample { t: i as f64 * 0.01, x: x as f64, y: y as f64 })
            .collect();
        let shifted: Vec<StrokeSample> = base
            .iter()
            .map(|s| StrokeSample { t: s.t, x: s.x + dx as f64, y: s.y + dy as f64 })
            .collect();
        let a = extract_features(&Stroke::from_samples(1, 1, base).0).unwrap();
        let b = extract_features(&Stroke::from_samples(1, 1, shifted).0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn roc_is_a_monotone_step_curve(
        samples in prop::collection::vec((0.0f64..1.0, any::<bool>()), 4..200)
    ) {
        let scores: Vec<f64> = samples.iter().map(|(s, _)| (s * 8.0).round() / 8.0).collect();
        let truth: Vec<bool> = samples.iter().map(|(_, t)| *t).collect();
        prop_assume!(truth.iter().any(|&t| t) && truth.iter().any(|&t| !t));
        let (points, auc) = roc_auc(&scores, &truth).unwrap();
        prop_assert!((0.0..=1.0).contains(&auc));
        prop_assert_eq!(points.first().unwrap().fpr, 0.0);
        prop_assert_eq!(points.first().unwrap().tpr, 0.0);
        prop_assert_eq!(points.last().unwrap().fpr, 1.0);
        prop_assert_eq!(points.last().unwrap().tpr, 1.0);
        for w in points.windows(2) {
            prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
    }
}
