//! Report rendering: per-user accuracy table, macro summary table, ROC SVGs
//! and the provenance block.
//!
//! Tables are rebuilt from the persisted eval artifacts (not from in-memory
//! state), and contain no timestamps, so identical inputs render identical
//! bytes on any machine.

use std::fs;
use std::path::Path;

use serde::Serialize;

use touchauth_core::evaluation::RocPoint;

use crate::config::RunConfig;
use crate::stages::{stage_error, MetricsFile, ModelMetrics, OutPaths, PipelineError};

/// Fixed display order for the report tables: k-NN, SVC, RF.
const MODEL_ORDER: [&str; 3] = ["knn", "svc", "rf"];

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "undefined".to_string(),
    }
}

fn model_display(name: &str) -> &'static str {
    match name {
        "knn" => "k-NN",
        "svc" => "SVC",
        "rf" => "RF",
        _ => "?",
    }
}

fn ordered<'a>(metrics: &'a MetricsFile) -> Vec<&'a ModelMetrics> {
    MODEL_ORDER
        .iter()
        .filter_map(|name| metrics.models.iter().find(|m| m.model == *name))
        .collect()
}

fn per_user_accuracy_csv(metrics: &MetricsFile) -> String {
    let models = ordered(metrics);
    let mut out = String::from("User");
    for m in &models {
        out.push_str(&format!(",{}", model_display(&m.model)));
    }
    out.push('\n');
    let users: Vec<u8> = models
        .first()
        .map(|m| m.per_user.iter().map(|u| u.user).collect())
        .unwrap_or_default();
    for user in users {
        out.push_str(&format!("{user}"));
        for m in &models {
            let acc = m
                .per_user
                .iter()
                .find(|u| u.user == user)
                .and_then(|u| u.metrics.accuracy);
            out.push_str(&format!(",{}", fmt_opt(acc)));
        }
        out.push('\n');
    }
    out
}

fn summary_csv(metrics: &MetricsFile) -> String {
    let mut out = String::from("Model,Accuracy,Precision,Recall,F1,AUC_macro,AUC_pooled,FAR,FRR\n");
    for m in ordered(metrics) {
        let mm = &m.macro_metrics;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            model_display(&m.model),
            fmt_opt(mm.accuracy),
            fmt_opt(mm.precision),
            fmt_opt(mm.recall),
            fmt_opt(mm.f1),
            fmt_opt(mm.auc_macro),
            fmt_opt(mm.auc_pooled),
            fmt_opt(mm.far),
            fmt_opt(mm.frr),
        ));
    }
    out
}

fn summary_text(cfg: &RunConfig, metrics: &MetricsFile) -> String {
    let mut out = String::new();
    out.push_str("Model evaluation summary (macro averages over users)\n");
    out.push_str("====================================================\n\n");
    out.push_str(&format!(
        "{:<6} {:>9} {:>10} {:>8} {:>8} {:>10} {:>11} {:>8} {:>8}\n",
        "Model", "Accuracy", "Precision", "Recall", "F1", "AUC_macro", "AUC_pooled", "FAR", "FRR"
    ));
    for m in ordered(metrics) {
        let mm = &m.macro_metrics;
        out.push_str(&format!(
            "{:<6} {:>9} {:>10} {:>8} {:>8} {:>10} {:>11} {:>8} {:>8}\n",
            model_display(&m.model),
            fmt_opt(mm.accuracy),
            fmt_opt(mm.precision),
            fmt_opt(mm.recall),
            fmt_opt(mm.f1),
            fmt_opt(mm.auc_macro),
            fmt_opt(mm.auc_pooled),
            fmt_opt(mm.far),
            fmt_opt(mm.frr),
        ));
    }
    out.push('\n');
    out.push_str("Notes:\n");
    out.push_str(
        "- Per-user counts come from the multiclass confusion matrix over the union\n  of all users' test sets; impostor samples are the other users' test rows.\n",
    );
    out.push_str("- Undefined (0/0) metrics are excluded from macro averages, never zeroed.\n");
    if cfg.knn.features.iter().any(|f| f == "Timestamp") {
        out.push_str(
            "- WARNING: the k-NN feature set includes Timestamp; across recording\n  sessions the timestamp is a potential identity leak.\n",
        );
    }
    let undefined: usize = metrics
        .models
        .iter()
        .map(|m| {
            let u = &m.macro_metrics.undefined;
            u.precision + u.recall + u.f1 + u.accuracy + u.far + u.frr
        })
        .sum();
    if undefined > 0 {
        out.push_str(&format!(
            "- {undefined} per-user metric value(s) were undefined and excluded.\n"
        ));
    }
    out
}

#[derive(Serialize)]
struct Provenance<'a> {
    config: &'a RunConfig,
    package_version: &'static str,
    model_format_version: u32,
}

/// Renders a ROC curve as a standalone SVG.
pub fn write_roc_svg(path: &Path, user: u8, points: &[RocPoint]) -> Result<(), String> {
    let (w, h, margin) = (440.0, 440.0, 40.0);
    let span = w - 2.0 * margin;
    let x = |fpr: f64| margin + fpr * span;
    let y = |tpr: f64| h - margin - tpr * span;
    let mut poly = String::new();
    for p in points {
        poly.push_str(&format!("{:.2},{:.2} ", x(p.fpr), y(p.tpr)));
    }
    let svg = format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<line x1=\"{m}\" y1=\"{ym}\" x2=\"{xm}\" y2=\"{ym}\" stroke=\"black\"/>\n",
            "<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{ym}\" stroke=\"black\"/>\n",
            "<line x1=\"{m}\" y1=\"{ym}\" x2=\"{xm}\" y2=\"{m}\" stroke=\"#999\" stroke-dasharray=\"6 4\"/>\n",
            "<polyline points=\"{poly}\" fill=\"none\" stroke=\"#0055cc\" stroke-width=\"2\"/>\n",
            "<text x=\"{tx}\" y=\"{ty}\" font-family=\"monospace\" font-size=\"14\">ROC user {user}</text>\n",
            "<text x=\"{lx}\" y=\"{ly}\" font-family=\"monospace\" font-size=\"12\">FPR</text>\n",
            "<text x=\"12\" y=\"{m}\" font-family=\"monospace\" font-size=\"12\">TPR</text>\n",
            "</svg>\n"
        ),
        w = w,
        h = h,
        m = margin,
        xm = w - margin,
        ym = h - margin,
        poly = poly.trim_end(),
        tx = margin + 8.0,
        ty = margin - 12.0,
        lx = w / 2.0,
        ly = h - 8.0,
        user = user,
    );
    fs::write(path, svg).map_err(|e| e.to_string())
}

/// Writes the per-user accuracy table, the macro summary table and the
/// provenance block from the persisted eval outputs.
pub fn render_report(cfg: &RunConfig) -> Result<(), PipelineError> {
    let err = stage_error::<String>("report");
    let paths = OutPaths::new(&cfg.out_dir);
    let report_dir = paths.report();
    fs::create_dir_all(&report_dir).map_err(|e| err(e.to_string()))?;
    let metrics_text = fs::read_to_string(paths.eval().join("metrics.json"))
        .map_err(|e| err(format!("metrics.json: {e} (run `eval` first)")))?;
    let metrics: MetricsFile =
        serde_json::from_str(&metrics_text).map_err(|e| err(e.to_string()))?;

    fs::write(
        report_dir.join("per_user_accuracy.csv"),
        per_user_accuracy_csv(&metrics),
    )
    .map_err(|e| err(e.to_string()))?;
    fs::write(report_dir.join("summary.csv"), summary_csv(&metrics))
        .map_err(|e| err(e.to_string()))?;
    fs::write(report_dir.join("summary.txt"), summary_text(cfg, &metrics))
        .map_err(|e| err(e.to_string()))?;
    let provenance = Provenance {
        config: cfg,
        package_version: env!("CARGO_PKG_VERSION"),
        model_format_version: touchauth_core::classifiers::store::MODEL_FORMAT_VERSION,
    };
    fs::write(
        report_dir.join("provenance.json"),
        serde_json::to_string_pretty(&provenance).map_err(|e| err(e.to_string()))?,
    )
    .map_err(|e| err(e.to_string()))?;
    Ok(())
}
