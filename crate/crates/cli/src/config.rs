//! Run configuration: data source, scaler scope, split mode, per-model
//! hyperparameters and feature masks, output directory and master seed.
//!
//! The JSON config file mirrors these fields one-to-one and the resolved
//! config is echoed verbatim into every report.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use touchauth_core::kinematics::{SplitMode, SplitSpec, FEATURE_COLUMNS};

use crate::synth::SynthSpec;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DataSource {
    /// Directory of `user<N>.log` kernel-event captures.
    RawLogDir { path: PathBuf },
    /// Directory of `user<N>.csv` metric files.
    MetricCsvDir { path: PathBuf },
    /// Generated capture with per-user kinematic profiles.
    Synthetic { spec: SynthSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerScope {
    /// Fit on the training split only (leakage-safe default).
    #[default]
    TrainOnly,
    /// Fit on train and test together, for parity with a globally
    /// standardized dataset.
    Global,
}

fn all_features() -> Vec<String> {
    FEATURE_COLUMNS.iter().map(|s| s.to_string()).collect()
}

fn features_without_timestamp() -> Vec<String> {
    FEATURE_COLUMNS
        .iter()
        .filter(|&&c| c != "Timestamp")
        .map(|s| s.to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    /// k-NN keeps the Timestamp column by default.
    #[serde(default = "all_features")]
    pub features: Vec<String>,
}

fn default_k() -> usize {
    2
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k: default_k(),
            features: all_features(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    #[serde(default = "default_n_estimators")]
    pub n_estimators: usize,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    #[serde(default = "default_min_samples_leaf")]
    pub min_samples_leaf: usize,
    #[serde(default = "features_without_timestamp")]
    pub features: Vec<String>,
}

fn default_n_estimators() -> usize {
    300
}

fn default_max_depth() -> usize {
    7
}

fn default_min_samples_leaf() -> usize {
    3
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_estimators: default_n_estimators(),
            max_depth: default_max_depth(),
            min_samples_leaf: default_min_samples_leaf(),
            features: features_without_timestamp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcConfig {
    #[serde(default = "default_c")]
    pub c: f64,
    /// `None` selects the `scale` convention, 1/(d * Var).
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "features_without_timestamp")]
    pub features: Vec<String>,
}

fn default_c() -> f64 {
    1.0
}

impl Default for SvcConfig {
    fn default() -> Self {
        SvcConfig {
            c: default_c(),
            gamma: None,
            features: features_without_timestamp(),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data_source: DataSource,
    #[serde(default)]
    pub scaler_scope: ScalerScope,
    #[serde(default)]
    pub split_mode: SplitMode,
    /// Debug flag: skip feature standardization entirely.
    #[serde(default = "default_true")]
    pub standardize: bool,
    /// Accept metric CSV columns in any order (the published dataset's
    /// on-disk layout is not guaranteed).
    #[serde(default)]
    pub csv_allow_reorder: bool,
    #[serde(default)]
    pub knn: KnnConfig,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub svc: SvcConfig,
    pub out_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl RunConfig {
    /// Default experiment: 15 synthetic users, chronological split,
    /// train-only scaler, documented hyperparameter defaults.
    pub fn default_synthetic(out_dir: PathBuf) -> Self {
        RunConfig {
            data_source: DataSource::Synthetic {
                spec: SynthSpec::default(),
            },
            scaler_scope: ScalerScope::default(),
            split_mode: SplitMode::default(),
            standardize: true,
            csv_allow_reorder: false,
            knn: KnnConfig::default(),
            forest: ForestConfig::default(),
            svc: SvcConfig::default(),
            out_dir,
            seed: DEFAULT_SEED,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: 0.70,
            mode: self.split_mode,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let cfg = RunConfig::default_synthetic(PathBuf::from("out"));
        assert_eq!(cfg.knn.k, 2);
        assert_eq!(cfg.forest.n_estimators, 300);
        assert_eq!(cfg.forest.max_depth, 7);
        assert_eq!(cfg.forest.min_samples_leaf, 3);
        assert_eq!(cfg.svc.c, 1.0);
        assert_eq!(cfg.svc.gamma, None);
        assert_eq!(cfg.seed, 42);
        assert!(cfg.knn.features.contains(&"Timestamp".to_string()));
        assert!(!cfg.forest.features.contains(&"Timestamp".to_string()));
        assert!(!cfg.svc.features.contains(&"Timestamp".to_string()));
        assert_eq!(cfg.split_spec().train_fraction, 0.70);
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig::default_synthetic(PathBuf::from("out"));
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let json = r#"{
            "data_source": { "type": "metric_csv_dir", "path": "/data" },
            "out_dir": "out",
            "knn": { "k": 4 }
        }"#;
        let cfg: RunConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.knn.k, 4);
        assert_eq!(cfg.knn.features.len(), 10);
        assert_eq!(cfg.forest.n_estimators, 300);
        assert_eq!(cfg.seed, 42);
        assert!(cfg.standardize);
        assert_eq!(cfg.scaler_scope, ScalerScope::TrainOnly);
    }
}
