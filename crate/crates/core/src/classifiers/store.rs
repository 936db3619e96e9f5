//! Versioned model container, so training and evaluation can run as separate
//! invocations. The header carries everything needed to reproduce the
//! prediction path: model kind, hyperparameters, seed, feature mask and the
//! scaler fitted at training time.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ForestModel, KnnModel, SvcModel};
use crate::preprocess::ScalerParams;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Knn,
    Forest,
    Svc,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Knn => write!(f, "knn"),
            ModelKind::Forest => write!(f, "rf"),
            ModelKind::Svc => write!(f, "svc"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelPayload {
    Knn(KnnModel),
    Forest(ForestModel),
    Svc(SvcModel),
}

impl ModelPayload {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelPayload::Knn(_) => ModelKind::Knn,
            ModelPayload::Forest(_) => ModelKind::Forest,
            ModelPayload::Svc(_) => ModelKind::Svc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelContainer {
    pub format_version: u32,
    pub kind: ModelKind,
    pub seed: u64,
    /// Feature columns the model consumes, in order.
    pub feature_mask: Vec<String>,
    /// Scaler fitted at training time; applied before masking at predict time.
    pub scaler: ScalerParams,
    /// Hyperparameter echo for the provenance block.
    pub hyperparameters: serde_json::Value,
    pub model: ModelPayload,
}

#[derive(Debug)]
pub enum StoreError {
    Io(std::io::Error),
    Format(String),
}

impl fmt::Display for StoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoreError::Io(e) => write!(f, "model I/O error: {e}"),
            StoreError::Format(msg) => write!(f, "model format error: {msg}"),
        }
    }
}

impl std::error::Error for StoreError {}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Io(e)
    }
}

pub fn save_model(container: &ModelContainer, path: &Path) -> Result<(), StoreError> {
    let json = serde_json::to_string(container)
        .map_err(|e| StoreError::Format(format!("serialize: {e}")))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelContainer, StoreError> {
    let text = fs::read_to_string(path)?;
    let container: ModelContainer =
        serde_json::from_str(&text).map_err(|e| StoreError::Format(format!("parse: {e}")))?;
    if container.format_version != MODEL_FORMAT_VERSION {
        return Err(StoreError::Format(format!(
            "unsupported format version {} (expected {MODEL_FORMAT_VERSION})",
            container.format_version
        )));
    }
    if container.kind != container.model.kind() {
        return Err(StoreError::Format(format!(
            "header kind {} does not match payload kind {}",
            container.kind,
            container.model.kind()
        )));
    }
    Ok(container)
}
