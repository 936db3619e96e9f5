//! The staged experiment pipeline: every stage reads its inputs from the
//! output directory (or the configured data source), writes its artifacts
//! there, and can run as a separate CLI invocation.
//!
//! Stage order: data (synth/ingest) -> clean -> featurize -> split -> train
//! -> eval -> report. Failures carry the stage tag.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use touchauth_core::classifiers::store::{
    load_model, save_model, ModelContainer, ModelKind, ModelPayload, MODEL_FORMAT_VERSION,
};
use touchauth_core::classifiers::{elbow_curve, rf_fit, svc_fit, ForestParams, KnnModel};
use touchauth_core::evaluation::{
    evaluate_model, BasicMetrics, BinaryCounts, MacroMetrics, ModelEvaluation,
};
use touchauth_core::ingest::{
    fold_events_to_rows, lifecycle_violations, parse_getevent_log, read_metric_csv,
    user_from_filename, CsvOptions, METRIC_CSV_HEADER,
};
use touchauth_core::kinematics::{
    extract_features, feature_csv_string, parse_feature_csv, segment_strokes, to_matrix,
    FeatureRow, LabeledSet, SplitSummary,
};
use touchauth_core::preprocess::{
    apply_scaler, clean_rows_traced, fit_scaler, CleanSample, DropCounts, ScalerParams,
};

use crate::config::{DataSource, RunConfig, ScalerScope};
use crate::report::{render_report, write_roc_svg};
use crate::synth::synth_generate;

#[derive(Debug)]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

impl std::error::Error for PipelineError {}

pub fn stage_error<E: fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError {
        stage,
        message: e.to_string(),
    }
}

/// Artifact locations under the output directory.
pub struct OutPaths {
    pub root: PathBuf,
}

impl OutPaths {
    pub fn new(root: &Path) -> Self {
        OutPaths {
            root: root.to_path_buf(),
        }
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn cleaned(&self) -> PathBuf {
        self.root.join("cleaned")
    }

    pub fn features(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn split(&self) -> PathBuf {
        self.root.join("split")
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

/// `user<N>.<ext>` files in a directory, ascending by user.
pub fn discover_users(dir: &Path, ext: &str) -> Result<Vec<(u8, PathBuf)>, String> {
    let entries = fs::read_dir(dir).map_err(|e| format!("cannot list {}: {e}", dir.display()))?;
    let mut found = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(user) = user_from_filename(&path) {
                found.push((user, path));
            }
        }
    }
    found.sort_by_key(|(user, _)| *user);
    if found.is_empty() {
        return Err(format!("no user<N>.{ext} files in {}", dir.display()));
    }
    Ok(found)
}

/// Materializes the metric CSVs: generates the synthetic capture, folds raw
/// logs, or points at the existing CSV directory. Returns the data dir.
pub fn stage_data(cfg: &RunConfig) -> Result<PathBuf, PipelineError> {
    let err = stage_error::<String>("data");
    match &cfg.data_source {
        DataSource::Synthetic { spec } => {
            let dir = OutPaths::new(&cfg.out_dir).data();
            synth_generate(spec, cfg.seed, &dir).map_err(|e| err(e.to_string()))?;
            Ok(dir)
        }
        DataSource::RawLogDir { path } => {
            let dir = OutPaths::new(&cfg.out_dir).data();
            fs::create_dir_all(&dir).map_err(|e| err(e.to_string()))?;
            for (user, log_path) in discover_users(path, "log").map_err(&err)? {
                let text = fs::read_to_string(&log_path).map_err(|e| err(e.to_string()))?;
                let events = parse_getevent_log(&text).map_err(|e| err(e.to_string()))?;
                let rows = fold_events_to_rows(&events, user).map_err(|e| err(e.to_string()))?;
                touchauth_core::ingest::write_metric_csv(
                    &rows,
                    &dir.join(format!("user{user}.csv")),
                )
                .map_err(|e| err(e.to_string()))?;
            }
            Ok(dir)
        }
        DataSource::MetricCsvDir { path } => {
            if !path.is_dir() {
                return Err(err(format!(
                    "data directory {} does not exist",
                    path.display()
                )));
            }
            Ok(path.clone())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserCleanSummary {
    pub user: u8,
    pub counts: DropCounts,
    pub lifecycle_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanSummary {
    pub per_user: Vec<UserCleanSummary>,
    pub total: DropCounts,
}

fn clean_csv_string(samples: &[CleanSample]) -> String {
    let mut out = String::new();
    out.push_str(&METRIC_CSV_HEADER.join(","));
    out.push('\n');
    for s in samples {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.timestamp,
            s.x,
            s.y,
            s.btn_touch,
            s.touch_major,
            s.touch_minor,
            s.tracking_id,
            s.pressure,
            s.finger,
        ));
    }
    out
}

fn parse_clean_csv(text: &str, user: u8) -> Result<Vec<CleanSample>, String> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header.trim_end_matches('\r') != METRIC_CSV_HEADER.join(",") {
        return Err(format!("bad cleaned-data header `{header}`"));
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 9 {
            return Err(format!(
                "line {}: expected 9 cells, got {}",
                i + 2,
                cells.len()
            ));
        }
        let num = |j: usize| -> Result<f64, String> {
            cells[j]
                .parse()
                .map_err(|_| format!("line {}: bad cell `{}`", i + 2, cells[j]))
        };
        samples.push(CleanSample {
            timestamp: num(0)?,
            x: num(1)?,
            y: num(2)?,
            btn_touch: num(3)?,
            touch_major: num(4)?,
            touch_minor: num(5)?,
            tracking_id: cells[6]
                .parse()
                .map_err(|_| format!("line {}: bad tracking id `{}`", i + 2, cells[6]))?,
            pressure: num(7)?,
            finger: cells[8]
                .parse()
                .map_err(|_| format!("line {}: bad finger flag `{}`", i + 2, cells[8]))?,
            user,
        });
    }
    Ok(samples)
}

/// Applies the cleaning rules per user file and persists cleaned CSVs plus
/// the drop-count summary (lifecycle violations are reported, not repaired).
pub fn stage_clean(cfg: &RunConfig, data_dir: &Path) -> Result<CleanSummary, PipelineError> {
    let err = stage_error::<String>("clean");
    let out = OutPaths::new(&cfg.out_dir).cleaned();
    fs::create_dir_all(&out).map_err(|e| err(e.to_string()))?;
    let opts = CsvOptions {
        allow_reorder: cfg.csv_allow_reorder,
    };
    let mut summary = CleanSummary {
        per_user: Vec::new(),
        total: DropCounts::default(),
    };
    for (user, path) in discover_users(data_dir, "csv").map_err(&err)? {
        let rows = read_metric_csv(&path, user, opts).map_err(|e| err(e.to_string()))?;
        let violations = lifecycle_violations(&rows);
        let (clean, trace, counts) = clean_rows_traced(&rows);
        fs::write(
            out.join(format!("user{user}.csv")),
            clean_csv_string(&clean),
        )
        .map_err(|e| err(e.to_string()))?;
        // Audit trail: which source row each cleaned row came from.
        let mut trace_csv = String::from("clean_index,source_row\n");
        for (i, src) in trace.iter().enumerate() {
            trace_csv.push_str(&format!("{i},{src}\n"));
        }
        fs::write(out.join(format!("user{user}_trace.csv")), trace_csv)
            .map_err(|e| err(e.to_string()))?;
        summary.total.add(&counts);
        summary.per_user.push(UserCleanSummary {
            user,
            counts,
            lifecycle_violations: violations.len(),
        });
    }
    fs::write(
        out.join("drop_counts.json"),
        serde_json::to_string_pretty(&summary).map_err(|e| err(e.to_string()))?,
    )
    .map_err(|e| err(e.to_string()))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserFeatureSummary {
    pub user: u8,
    pub strokes: usize,
    pub feature_rows: usize,
    pub duplicates_collapsed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizeSummary {
    pub per_user: Vec<UserFeatureSummary>,
}

/// Segments strokes and derives the kinematic features per user.
pub fn stage_featurize(cfg: &RunConfig) -> Result<FeaturizeSummary, PipelineError> {
    let err = stage_error::<String>("featurize");
    let paths = OutPaths::new(&cfg.out_dir);
    let out = paths.features();
    fs::create_dir_all(&out).map_err(|e| err(e.to_string()))?;
    let mut summary = FeaturizeSummary::default();
    for (user, path) in discover_users(&paths.cleaned(), "csv").map_err(&err)? {
        let cleaned_dir = path.parent().expect("user file has a parent");
        let text = fs::read_to_string(&path).map_err(|e| err(e.to_string()))?;
        let samples = parse_clean_csv(&text, user).map_err(&err)?;
        let (strokes, duplicates_collapsed) = segment_strokes(&samples);
        let mut rows: Vec<FeatureRow> = Vec::new();
        let mut stroke_of_row: Vec<i64> = Vec::new();
        for stroke in &strokes {
            let extracted = extract_features(stroke).map_err(|e| err(e.to_string()))?;
            stroke_of_row.extend(std::iter::repeat(stroke.tracking_id).take(extracted.len()));
            rows.extend(extracted);
        }
        fs::write(
            out.join(format!("user{user}.csv")),
            feature_csv_string(&rows),
        )
        .map_err(|e| err(e.to_string()))?;

        // Audit trail: feature row -> cleaned row -> source row. Within a
        // user, (tracking_id, timestamp) is unique after duplicate collapse.
        let source_of_clean =
            read_trace(&cleaned_dir.join(format!("user{user}_trace.csv"))).map_err(&err)?;
        let mut clean_index: std::collections::HashMap<(i64, u64), usize> = Default::default();
        for (i, s) in samples.iter().enumerate() {
            clean_index.insert((s.tracking_id, s.timestamp.to_bits()), i);
        }
        let mut trace_csv = String::from("feature_index,clean_index,source_row\n");
        for (i, (row, tid)) in rows.iter().zip(&stroke_of_row).enumerate() {
            let ci = *clean_index
                .get(&(*tid, row.timestamp.to_bits()))
                .ok_or_else(|| err(format!("feature row {i} lost its cleaned sample")))?;
            let src = source_of_clean
                .get(ci)
                .ok_or_else(|| err(format!("cleaned row {ci} missing from the trace")))?;
            trace_csv.push_str(&format!("{i},{ci},{src}\n"));
        }
        fs::write(out.join(format!("user{user}_trace.csv")), trace_csv)
            .map_err(|e| err(e.to_string()))?;
        summary.per_user.push(UserFeatureSummary {
            user,
            strokes: strokes.len(),
            feature_rows: rows.len(),
            duplicates_collapsed,
        });
    }
    fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary).map_err(|e| err(e.to_string()))?,
    )
    .map_err(|e| err(e.to_string()))?;
    Ok(summary)
}

fn read_trace(path: &Path) -> Result<Vec<usize>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut sources = Vec::new();
    for line in text.lines().skip(1) {
        let src = line
            .rsplit(',')
            .next()
            .and_then(|c| c.trim().parse::<usize>().ok())
            .ok_or_else(|| format!("bad trace line `{line}` in {}", path.display()))?;
        sources.push(src);
    }
    Ok(sources)
}

fn write_labeled_set(set: &LabeledSet, path: &Path) -> Result<(), String> {
    let mut out = String::new();
    out.push_str(&set.matrix.columns.join(","));
    out.push_str(",User\n");
    for (row, label) in set.matrix.rows.iter().zip(&set.labels) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push_str(&format!(",{label}\n"));
    }
    fs::write(path, out).map_err(|e| e.to_string())
}

fn read_labeled_set(path: &Path) -> Result<LabeledSet, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let rows = parse_feature_csv(&text).map_err(|e| e.to_string())?;
    let labels: Vec<u8> = rows.iter().map(|r| r.user).collect();
    Ok(LabeledSet {
        matrix: to_matrix(&rows),
        labels,
    })
}

/// Builds the 70/30 per-user splits and persists the shared training set and
/// per-user test sets.
pub fn stage_split(cfg: &RunConfig) -> Result<SplitSummary, PipelineError> {
    let err = stage_error::<String>("split");
    let paths = OutPaths::new(&cfg.out_dir);
    let out = paths.split();
    fs::create_dir_all(&out).map_err(|e| err(e.to_string()))?;
    let mut per_user: Vec<(u8, Vec<FeatureRow>)> = Vec::new();
    for (user, path) in discover_users(&paths.features(), "csv").map_err(&err)? {
        let text = fs::read_to_string(&path).map_err(|e| err(e.to_string()))?;
        let rows = parse_feature_csv(&text).map_err(|e| err(e.to_string()))?;
        per_user.push((user, rows));
    }
    let split = touchauth_core::kinematics::build_splits(&per_user, &cfg.split_spec())
        .map_err(|e| err(e.to_string()))?;
    write_labeled_set(&split.train, &out.join("train.csv")).map_err(&err)?;
    for (user, set) in &split.tests {
        write_labeled_set(set, &out.join(format!("user{user}_test.csv"))).map_err(&err)?;
    }
    fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&split.summary).map_err(|e| err(e.to_string()))?,
    )
    .map_err(|e| err(e.to_string()))?;
    Ok(split.summary)
}

fn identity_scaler(columns: &[String]) -> ScalerParams {
    ScalerParams {
        columns: columns.to_vec(),
        mean: vec![0.0; columns.len()],
        scale: vec![1.0; columns.len()],
    }
}

fn read_test_sets(split_dir: &Path) -> Result<Vec<(u8, LabeledSet)>, String> {
    let entries =
        fs::read_dir(split_dir).map_err(|e| format!("cannot list {}: {e}", split_dir.display()))?;
    let mut found: Vec<(u8, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| e.to_string())?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(stem) = name.strip_suffix("_test.csv") {
            if let Some(digits) = stem.strip_prefix("user") {
                if let Ok(user) = digits.parse::<u8>() {
                    found.push((user, path));
                }
            }
        }
    }
    found.sort_by_key(|(user, _)| *user);
    if found.is_empty() {
        return Err(format!(
            "no user<N>_test.csv files in {}",
            split_dir.display()
        ));
    }
    found
        .into_iter()
        .map(|(user, path)| read_labeled_set(&path).map(|set| (user, set)))
        .collect()
}

/// Fits the selected models on the standardized, masked training set and
/// saves each as a self-describing container.
pub fn stage_train(cfg: &RunConfig, kinds: &[ModelKind]) -> Result<(), PipelineError> {
    let err = stage_error::<String>("train");
    let paths = OutPaths::new(&cfg.out_dir);
    let out = paths.models();
    fs::create_dir_all(&out).map_err(|e| err(e.to_string()))?;
    let train = read_labeled_set(&paths.split().join("train.csv")).map_err(&err)?;

    let scaler = if !cfg.standardize {
        identity_scaler(&train.matrix.columns)
    } else {
        let fit_basis = match cfg.scaler_scope {
            ScalerScope::TrainOnly => train.matrix.clone(),
            ScalerScope::Global => {
                let mut all = train.matrix.clone();
                for (_, set) in read_test_sets(&paths.split()).map_err(&err)? {
                    all = all.vstack(&set.matrix).map_err(|e| err(e.to_string()))?;
                }
                all
            }
        };
        fit_scaler(&fit_basis).map_err(|e| err(e.to_string()))?
    };
    let train_scaled = apply_scaler(&scaler, &train.matrix).map_err(|e| err(e.to_string()))?;

    for kind in kinds {
        let (mask, hyperparameters) = match kind {
            ModelKind::Knn => (
                cfg.knn.features.clone(),
                serde_json::json!({ "k": cfg.knn.k }),
            ),
            ModelKind::Forest => (
                cfg.forest.features.clone(),
                serde_json::json!({
                    "n_estimators": cfg.forest.n_estimators,
                    "max_depth": cfg.forest.max_depth,
                    "min_samples_leaf": cfg.forest.min_samples_leaf,
                }),
            ),
            ModelKind::Svc => (
                cfg.svc.features.clone(),
                serde_json::json!({ "c": cfg.svc.c, "gamma": cfg.svc.gamma }),
            ),
        };
        let masked = train_scaled
            .select_columns(&mask)
            .map_err(|e| err(e.to_string()))?;
        let model = match kind {
            ModelKind::Knn => ModelPayload::Knn(
                KnnModel::fit(masked.rows.clone(), train.labels.clone(), cfg.knn.k)
                    .map_err(|e| err(e.to_string()))?,
            ),
            ModelKind::Forest => {
                let params = ForestParams {
                    n_estimators: cfg.forest.n_estimators,
                    max_depth: cfg.forest.max_depth,
                    min_samples_leaf: cfg.forest.min_samples_leaf,
                    features_per_split: None,
                };
                ModelPayload::Forest(
                    rf_fit(&masked.rows, &train.labels, &params, cfg.seed)
                        .map_err(|e| err(e.to_string()))?,
                )
            }
            ModelKind::Svc => ModelPayload::Svc(
                svc_fit(&masked.rows, &train.labels, cfg.svc.c, cfg.svc.gamma)
                    .map_err(|e| err(e.to_string()))?,
            ),
        };
        let container = ModelContainer {
            format_version: MODEL_FORMAT_VERSION,
            kind: *kind,
            seed: cfg.seed,
            feature_mask: mask,
            scaler: scaler.clone(),
            hyperparameters,
            model,
        };
        save_model(&container, &out.join(format!("{kind}.json")))
            .map_err(|e| err(e.to_string()))?;
    }
    Ok(())
}

/// One model's rows in the persisted metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: String,
    pub per_user: Vec<UserMetricsRow>,
    pub macro_metrics: MacroMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMetricsRow {
    pub user: u8,
    pub counts: BinaryCounts,
    pub metrics: BasicMetrics,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub models: Vec<ModelMetrics>,
}

pub struct EvalArtifacts {
    pub labels: Vec<u8>,
    pub models: Vec<(ModelKind, ModelEvaluation)>,
    pub metrics: MetricsFile,
    pub elbow: Option<Vec<(usize, f64)>>,
}

fn scores_csv(labels: &[u8], evaluation: &ModelEvaluation) -> String {
    let mut out = String::from("true_user");
    for l in labels {
        out.push_str(&format!(",score_{l}"));
    }
    out.push('\n');
    for (user, set_scores) in &evaluation.scores {
        for s in set_scores {
            out.push_str(&format!("{user}"));
            for l in labels {
                out.push_str(&format!(",{}", s.score_for(*l)));
            }
            out.push('\n');
        }
    }
    out
}

fn roc_csv(points: &[touchauth_core::evaluation::RocPoint]) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
    }
    out
}

/// Evaluates every trained model against every user's test set; writes
/// confusion matrices, per-user ROC curves (CSV and SVG), raw score files,
/// the k-NN elbow curve and `metrics.json`.
pub fn stage_eval(cfg: &RunConfig) -> Result<EvalArtifacts, PipelineError> {
    let err = stage_error::<String>("eval");
    let paths = OutPaths::new(&cfg.out_dir);
    let eval_dir = paths.eval();
    fs::create_dir_all(&eval_dir).map_err(|e| err(e.to_string()))?;
    let tests = read_test_sets(&paths.split()).map_err(&err)?;
    let train = read_labeled_set(&paths.split().join("train.csv")).map_err(&err)?;
    let mut labels: Vec<u8> = train.labels.clone();
    labels.sort_unstable();
    labels.dedup();

    let mut artifacts = EvalArtifacts {
        labels: labels.clone(),
        models: Vec::new(),
        metrics: MetricsFile { models: Vec::new() },
        elbow: None,
    };

    for kind in [ModelKind::Knn, ModelKind::Forest, ModelKind::Svc] {
        let model_path = paths.models().join(format!("{kind}.json"));
        if !model_path.exists() {
            continue;
        }
        let container = load_model(&model_path).map_err(|e| err(e.to_string()))?;
        let mut masked_tests: Vec<(u8, Vec<Vec<f64>>)> = Vec::new();
        for (user, set) in &tests {
            let scaled =
                apply_scaler(&container.scaler, &set.matrix).map_err(|e| err(e.to_string()))?;
            let masked = scaled
                .select_columns(&container.feature_mask)
                .map_err(|e| err(e.to_string()))?;
            masked_tests.push((*user, masked.rows));
        }
        let test_refs: Vec<(u8, &[Vec<f64>])> = masked_tests
            .iter()
            .map(|(u, rows)| (*u, rows.as_slice()))
            .collect();
        let evaluation = match &container.model {
            ModelPayload::Knn(m) => evaluate_model(&labels, &test_refs, |row| m.predict(row)),
            ModelPayload::Forest(m) => evaluate_model(&labels, &test_refs, |row| m.predict(row)),
            ModelPayload::Svc(m) => evaluate_model(&labels, &test_refs, |row| m.predict(row)),
        }
        .map_err(|e| err(e.to_string()))?;

        let model_dir = eval_dir.join(format!("{kind}"));
        fs::create_dir_all(&model_dir).map_err(|e| err(e.to_string()))?;
        fs::write(
            model_dir.join("confusion_matrix.txt"),
            evaluation.confusion.to_bracket_string(),
        )
        .map_err(|e| err(e.to_string()))?;
        for (user, matrix) in &evaluation.per_user_confusions {
            fs::write(
                model_dir.join(format!("user{user}_confusion_matrix.txt")),
                matrix.to_bracket_string(),
            )
            .map_err(|e| err(e.to_string()))?;
        }
        for user_eval in &evaluation.per_user {
            fs::write(
                model_dir.join(format!("roc_user{}.csv", user_eval.user)),
                roc_csv(&user_eval.roc),
            )
            .map_err(|e| err(e.to_string()))?;
            write_roc_svg(
                &model_dir.join(format!("roc_user{}.svg", user_eval.user)),
                user_eval.user,
                &user_eval.roc,
            )
            .map_err(&err)?;
        }
        fs::write(
            model_dir.join("scores.csv"),
            scores_csv(&labels, &evaluation),
        )
        .map_err(|e| err(e.to_string()))?;

        if kind == ModelKind::Knn {
            let train_scaled =
                apply_scaler(&container.scaler, &train.matrix).map_err(|e| err(e.to_string()))?;
            let train_masked = train_scaled
                .select_columns(&container.feature_mask)
                .map_err(|e| err(e.to_string()))?;
            let mut val_rows: Vec<Vec<f64>> = Vec::new();
            let mut val_labels: Vec<u8> = Vec::new();
            for (user, rows) in &masked_tests {
                val_rows.extend(rows.iter().cloned());
                val_labels.extend(std::iter::repeat(*user).take(rows.len()));
            }
            let max_k = 10.min(train_masked.rows.len());
            let ks: Vec<usize> = (1..=max_k).collect();
            let curve = elbow_curve(
                (train_masked.rows, train.labels.clone()),
                (&val_rows, &val_labels),
                &ks,
            )
            .map_err(|e| err(e.to_string()))?;
            let mut text = String::from("k,error_rate\n");
            for (k, e) in &curve {
                text.push_str(&format!("{k},{e}\n"));
            }
            fs::write(model_dir.join("elbow.csv"), text).map_err(|e| err(e.to_string()))?;
            artifacts.elbow = Some(curve);
        }

        artifacts.metrics.models.push(ModelMetrics {
            model: kind.to_string(),
            per_user: evaluation
                .per_user
                .iter()
                .map(|u| UserMetricsRow {
                    user: u.user,
                    counts: u.counts,
                    metrics: u.metrics,
                    auc: u.auc,
                })
                .collect(),
            macro_metrics: evaluation.macro_metrics,
        });
        artifacts.models.push((kind, evaluation));
    }
    if artifacts.models.is_empty() {
        return Err(err("no trained models found; run `train` first".into()));
    }
    fs::write(
        eval_dir.join("metrics.json"),
        serde_json::to_string_pretty(&artifacts.metrics).map_err(|e| err(e.to_string()))?,
    )
    .map_err(|e| err(e.to_string()))?;
    Ok(artifacts)
}

/// Everything a full run produces, in memory.
pub struct ExperimentReport {
    pub config: RunConfig,
    pub clean: CleanSummary,
    pub features: FeaturizeSummary,
    pub split: SplitSummary,
    pub eval: EvalArtifacts,
}

/// Runs the whole experiment: data -> clean -> featurize -> split -> train
/// (all three models) -> eval -> report.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentReport, PipelineError> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| PipelineError {
        stage: "setup",
        message: e.to_string(),
    })?;
    fs::write(
        cfg.out_dir.join("config.json"),
        serde_json::to_string_pretty(cfg).map_err(|e| PipelineError {
            stage: "setup",
            message: e.to_string(),
        })?,
    )
    .map_err(|e| PipelineError {
        stage: "setup",
        message: e.to_string(),
    })?;
    let data_dir = stage_data(cfg)?;
    let clean = stage_clean(cfg, &data_dir)?;
    let features = stage_featurize(cfg)?;
    let split = stage_split(cfg)?;
    stage_train(cfg, &[ModelKind::Knn, ModelKind::Forest, ModelKind::Svc])?;
    let eval = stage_eval(cfg)?;
    render_report(cfg)?;
    Ok(ExperimentReport {
        config: cfg.clone(),
        clean,
        features,
        split,
        eval,
    })
}
