//! Row types shared by the store, the HTTP API and the client.

use std::collections::BTreeMap;

use obz_core::detectors::{Detector, OutlierVerdict};
use obz_core::xai_eval::{CurveMode, TargetClass};
use obz_core::{FeatureVector, Matrix, Timestamp};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub display_name: String,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiToken {
    /// Hex SHA-256 of the raw secret.
    pub token_hash: String,
    pub user_id: String,
    pub created_at: Timestamp,
    pub revoked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskMode {
    #[default]
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectRecord {
    pub project_id: String,
    pub name: String,
    pub task_mode: TaskMode,
    pub created_at: Timestamp,
    pub owner_user_id: String,
}

/// Which detector a reference set feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    /// The 16 first-order features, modeled by a GMM.
    Fof,
    /// Precomputed embeddings, modeled by PCA.
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefFeatureSet {
    pub project_id: String,
    pub kind: FeatureKind,
    pub feature_names: Vec<String>,
    pub matrix: Matrix,
    pub detector: Detector,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityEntry {
    pub mode: CurveMode,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub log_id: String,
    pub project_id: String,
    pub sample_id: String,
    pub timestamp: Timestamp,
    pub prediction: Vec<Prediction>,
    pub features: Option<FeatureVector>,
    pub embedding: Option<Vec<f64>>,
    pub verdicts: Vec<OutlierVerdict>,
    pub image_key: Option<String>,
    pub heatmap_keys: BTreeMap<String, String>,
    pub target_class: Option<TargetClass>,
    /// Gini compactness of each stored heatmap.
    pub compactness: BTreeMap<String, f64>,
    /// Normalized AUC of client-supplied perturbation curves, per method.
    pub fidelity: BTreeMap<String, FidelityEntry>,
}

impl LogRecord {
    pub fn new(log_id: String, project_id: String, sample_id: String, timestamp: Timestamp) -> Self {
        LogRecord {
            log_id,
            project_id,
            sample_id,
            timestamp,
            prediction: Vec::new(),
            features: None,
            embedding: None,
            verdicts: Vec::new(),
            image_key: None,
            heatmap_keys: BTreeMap::new(),
            target_class: None,
            compactness: BTreeMap::new(),
            fidelity: BTreeMap::new(),
        }
    }

    pub fn is_outlier(&self) -> bool {
        self.verdicts.iter().any(|v| v.is_outlier)
    }

    pub fn top_prediction(&self) -> Option<&Prediction> {
        self.prediction
            .iter()
            .max_by(|a, b| a.probability.total_cmp(&b.probability))
    }

    /// Every blob key the record owns.
    pub fn blob_keys(&self) -> impl Iterator<Item = &str> {
        self.image_key
            .as_deref()
            .into_iter()
            .chain(self.heatmap_keys.values().map(String::as_str))
    }
}

/// Filter for [`crate::store::MetadataStore::query_logs`]. The window is `[from, to)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogQuery {
    pub project_id: String,
    pub from: Timestamp,
    pub to: Timestamp,
    pub outlier_only: bool,
    pub limit: Option<usize>,
    pub offset: usize,
}

impl LogQuery {
    pub fn all(project_id: impl Into<String>) -> Self {
        LogQuery {
            project_id: project_id.into(),
            from: Timestamp(i64::MIN),
            to: Timestamp(i64::MAX),
            outlier_only: false,
            limit: None,
            offset: 0,
        }
    }
}

pub fn now() -> Timestamp {
    let ms = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0);
    Timestamp(ms)
}
