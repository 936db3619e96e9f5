//! End-to-end pipeline behaviour: smoke, determinism, the standardization
//! debug flag, post-hoc recomputation from persisted artifacts, and the
//! ground-truth checks the synthetic generator enables.

use std::fs;
use std::path::Path;

use touchauth_cli::config::{DataSource, RunConfig, ScalerScope};
use touchauth_cli::stages::{run_experiment, MetricsFile};
use touchauth_cli::synth::{default_profiles, generate_user_rows, synth_generate_logs, SynthSpec};
use touchauth_core::classifiers::store::load_model;
use touchauth_core::classifiers::KnnModel;
use touchauth_core::evaluation::{basic_metrics, binarize_for_user, roc_auc, ConfusionMatrix};
use touchauth_core::ingest::{read_metric_csv, CsvOptions};
use touchauth_core::matrix::FeatureMatrix;
use touchauth_core::preprocess::{apply_scaler, clean_rows, fit_scaler};

fn micro_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default_synthetic(out.to_path_buf());
    cfg.data_source = DataSource::Synthetic {
        spec: SynthSpec {
            n_users: 2,
            session_minutes: 5.0,
            ..SynthSpec::default()
        },
    };
    cfg
}

#[test]
fn micro_run_emits_all_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_config(&dir.path().join("out"));
    let report = run_experiment(&cfg).unwrap();

    // ~500 raw rows per user at these settings.
    for user in &report.clean.per_user {
        assert!(
            user.counts.total_in >= 400,
            "user {} rows {}",
            user.user,
            user.counts.total_in
        );
    }
    let out = &cfg.out_dir;
    for file in [
        "config.json",
        "cleaned/drop_counts.json",
        "features/summary.json",
        "split/train.csv",
        "split/summary.json",
        "eval/metrics.json",
        "report/per_user_accuracy.csv",
        "report/summary.csv",
        "report/summary.txt",
        "report/provenance.json",
    ] {
        assert!(out.join(file).is_file(), "missing {file}");
    }
    for model in ["knn", "rf", "svc"] {
        for file in [
            "confusion_matrix.txt",
            "scores.csv",
            "roc_user1.csv",
            "roc_user1.svg",
            "user1_confusion_matrix.txt",
            "user2_confusion_matrix.txt",
        ] {
            assert!(
                out.join("eval").join(model).join(file).is_file(),
                "missing eval/{model}/{file}"
            );
        }
    }
    assert!(out.join("eval/knn/elbow.csv").is_file());
    assert!(out.join("models/knn.json").is_file());
    assert!(out.join("models/rf.json").is_file());
    assert!(out.join("models/svc.json").is_file());
}

#[test]
fn rerun_reproduces_metrics_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_a = micro_config(&dir.path().join("a"));
    let cfg_b = micro_config(&dir.path().join("b"));
    run_experiment(&cfg_a).unwrap();
    run_experiment(&cfg_b).unwrap();
    for file in [
        "eval/metrics.json",
        "report/summary.csv",
        "report/per_user_accuracy.csv",
    ] {
        let a = fs::read(cfg_a.out_dir.join(file)).unwrap();
        let b = fs::read(cfg_b.out_dir.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    // Same for the generated inputs themselves.
    let a = fs::read(cfg_a.out_dir.join("data/user1.csv")).unwrap();
    let b = fs::read(cfg_b.out_dir.join("data/user1.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn skipping_standardization_degrades_knn_on_anisotropic_data() {
    // Two classes separated only in a low-magnitude feature; the other
    // feature is 1000x larger pure noise.
    let mut rng_state = 88172645463325252u64;
    let mut rand01 = move || {
        // xorshift; plenty for test data.
        rng_state ^= rng_state << 13;
        rng_state ^= rng_state >> 7;
        rng_state ^= rng_state << 17;
        (rng_state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..200 {
        let class = (i % 2) as u8 + 1;
        let signal = if class == 1 { 0.0 } else { 1.0 } + 0.1 * (rand01() - 0.5);
        let noise = 1000.0 * (rand01() - 0.5);
        rows.push(vec![noise, signal]);
        labels.push(class);
    }
    let (train_rows, train_labels) = (rows[..140].to_vec(), labels[..140].to_vec());
    let (test_rows, test_labels) = (&rows[140..], &labels[140..]);

    let accuracy = |data: &[Vec<f64>], queries: &[Vec<f64>]| {
        let model = KnnModel::fit(data.to_vec(), train_labels.clone(), 3).unwrap();
        queries
            .iter()
            .zip(test_labels)
            .filter(|(q, l)| model.predict(q).unwrap().argmax() == **l)
            .count() as f64
            / test_labels.len() as f64
    };
    let raw_acc = accuracy(&train_rows, test_rows);

    let columns = vec!["noise".to_string(), "signal".to_string()];
    let train_m = FeatureMatrix::new(columns.clone(), train_rows).unwrap();
    let params = fit_scaler(&train_m).unwrap();
    let scaled_train = apply_scaler(&params, &train_m).unwrap();
    let test_m = FeatureMatrix::new(columns, test_rows.to_vec()).unwrap();
    let scaled_test = apply_scaler(&params, &test_m).unwrap();
    let scaled_acc = accuracy(&scaled_train.rows, &scaled_test.rows);

    assert!(
        scaled_acc - raw_acc >= 0.3,
        "standardization should matter: raw {raw_acc}, scaled {scaled_acc}"
    );
}

#[test]
fn standardize_off_flag_produces_identity_scaler() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = micro_config(&dir.path().join("out"));
    cfg.standardize = false;
    run_experiment(&cfg).unwrap();
    let container = load_model(&cfg.out_dir.join("models/knn.json")).unwrap();
    assert!(container.scaler.mean.iter().all(|&m| m == 0.0));
    assert!(container.scaler.scale.iter().all(|&s| s == 1.0));
}

#[test]
fn summary_tables_match_recomputation_from_persisted_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_config(&dir.path().join("out"));
    run_experiment(&cfg).unwrap();
    let metrics: MetricsFile =
        serde_json::from_str(&fs::read_to_string(cfg.out_dir.join("eval/metrics.json")).unwrap())
            .unwrap();
    let labels = vec![1u8, 2];

    for model in &metrics.models {
        // Re-derive the per-user metrics from the persisted confusion matrix.
        let text = fs::read_to_string(
            cfg.out_dir
                .join(format!("eval/{}/confusion_matrix.txt", model.model)),
        )
        .unwrap();
        let matrix = ConfusionMatrix::from_bracket_str(&text, &labels).unwrap();
        for row in &model.per_user {
            let counts = binarize_for_user(&matrix, row.user);
            assert_eq!(counts, row.counts, "{} user {}", model.model, row.user);
            let recomputed = basic_metrics(&counts);
            assert_eq!(recomputed, row.metrics);
        }
        // Re-derive each user's AUC from the persisted score file.
        let scores_text =
            fs::read_to_string(cfg.out_dir.join(format!("eval/{}/scores.csv", model.model)))
                .unwrap();
        let mut lines = scores_text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
            .collect();
        for (u_idx, &user) in labels.iter().enumerate() {
            let col = header
                .iter()
                .position(|h| *h == format!("score_{user}"))
                .expect("score column");
            let scores: Vec<f64> = rows.iter().map(|r| r[col]).collect();
            let truth: Vec<bool> = rows.iter().map(|r| r[0] as u8 == user).collect();
            let (_, auc) = roc_auc(&scores, &truth).unwrap();
            let reported = model.per_user[u_idx].auc;
            assert!(
                (auc - reported).abs() < 1e-12,
                "{} user {user}: auc {auc} vs reported {reported}",
                model.model
            );
        }
    }
}

#[test]
fn feature_rows_trace_back_to_source_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_config(&dir.path().join("out"));
    run_experiment(&cfg).unwrap();
    for user in [1u8, 2] {
        let source = read_metric_csv(
            &cfg.out_dir.join(format!("data/user{user}.csv")),
            user,
            CsvOptions::default(),
        )
        .unwrap();
        let features = touchauth_core::kinematics::parse_feature_csv(
            &fs::read_to_string(cfg.out_dir.join(format!("features/user{user}.csv"))).unwrap(),
        )
        .unwrap();
        let trace =
            fs::read_to_string(cfg.out_dir.join(format!("features/user{user}_trace.csv"))).unwrap();
        let mut traced_rows = 0;
        for line in trace.lines().skip(1) {
            let cells: Vec<usize> = line.split(',').map(|c| c.parse().unwrap()).collect();
            let (feature_index, source_row) = (cells[0], cells[2]);
            // A feature row's timestamp is the timestamp of the source row it
            // was derived at.
            assert_eq!(
                features[feature_index].timestamp,
                source[source_row].timestamp
            );
            traced_rows += 1;
        }
        assert_eq!(traced_rows, features.len(), "every feature row is traced");
    }
}

#[test]
fn segmentation_recovers_generator_stroke_membership() {
    let spec = SynthSpec {
        n_users: 2,
        session_minutes: 4.0,
        sentinel_fraction: 0.0,
        missing_fraction: 0.0,
        ..SynthSpec::default()
    };
    for profile in default_profiles(&spec, 99) {
        let (rows, truth) = generate_user_rows(&profile, &spec);
        let (clean, counts) = clean_rows(&rows);
        assert_eq!(counts.kept, rows.len());
        let (strokes, collapsed) = touchauth_core::kinematics::segment_strokes(&clean);
        assert_eq!(collapsed, 0);
        assert_eq!(strokes.len(), truth.strokes.len());
        let mut expected: Vec<(i64, usize)> = truth
            .strokes
            .iter()
            .map(|s| (s.tracking_id, s.n_samples))
            .collect();
        expected.sort_unstable();
        let got: Vec<(i64, usize)> = strokes
            .iter()
            .map(|s| (s.tracking_id, s.samples.len()))
            .collect();
        assert_eq!(got, expected);
    }
}

#[test]
fn raw_log_source_drives_the_full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let logs = dir.path().join("logs");
    let spec = SynthSpec {
        n_users: 2,
        session_minutes: 5.0,
        ..SynthSpec::default()
    };
    synth_generate_logs(&spec, 7, &logs).unwrap();

    let mut cfg = RunConfig::default_synthetic(dir.path().join("out"));
    cfg.data_source = DataSource::RawLogDir { path: logs.clone() };
    cfg.seed = 7;
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.split.per_user.len(), 2);
    // The ingest stage materialized the folded CSVs.
    let folded = read_metric_csv(
        &cfg.out_dir.join("data/user1.csv"),
        1,
        CsvOptions::default(),
    )
    .unwrap();
    assert!(!folded.is_empty());
    assert!(touchauth_core::ingest::lifecycle_violations(&folded).is_empty());
}

#[test]
fn global_scaler_scope_runs_and_differs_from_train_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg_a = micro_config(&dir.path().join("a"));
    cfg_a.scaler_scope = ScalerScope::Global;
    let mut cfg_b = micro_config(&dir.path().join("b"));
    cfg_b.scaler_scope = ScalerScope::TrainOnly;
    run_experiment(&cfg_a).unwrap();
    run_experiment(&cfg_b).unwrap();
    let scaler_a = load_model(&cfg_a.out_dir.join("models/svc.json"))
        .unwrap()
        .scaler;
    let scaler_b = load_model(&cfg_b.out_dir.join("models/svc.json"))
        .unwrap()
        .scaler;
    assert_ne!(scaler_a.mean, scaler_b.mean);
}
