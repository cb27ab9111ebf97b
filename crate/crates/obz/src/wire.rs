//! JSON bodies of the /v1 HTTP API. Binary tensors travel base64-encoded in OBZT form.

use std::collections::BTreeMap;

use obz_core::detectors::{Detector, OutlierVerdict};
use obz_core::xai_eval::{CurveMode, TargetClass};
use obz_core::{FeatureVector, Timestamp};
use serde::{Deserialize, Serialize};

use crate::records::{FeatureKind, LogRecord, Prediction, ProjectRecord, TaskMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Whoami {
    pub user_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenInfo {
    pub token_hash: String,
    pub created_at: Timestamp,
    pub revoked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateProject {
    pub name: String,
    #[serde(default)]
    pub task_mode: TaskMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectList {
    pub projects: Vec<ProjectRecord>,
}

/// Reference matrix upload. The kind defaults to `fof` when the columns are the
/// canonical feature names and to `embedding` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefUpload {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<FeatureKind>,
    /// Fixed GMM component count; BIC selection when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Fixed PCA rank; takes precedence over `variance_fraction`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub kind: FeatureKind,
    pub detector: obz_core::DetectorKind,
    pub rows: usize,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    pub quantile: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefResponse {
    pub models: Vec<ModelSummary>,
}

/// Fitted models of a project, for offline recomputation of verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gmm: Option<Detector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca: Option<Detector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveUpload {
    pub method: String,
    pub mode: CurveMode,
    pub fractions: Vec<f64>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestEnvelope {
    pub sample_id: String,
    /// Milliseconds since the Unix epoch; the server clock when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<Timestamp>,
    #[serde(default)]
    pub prediction: Vec<Prediction>,
    /// OBZT tensor, `[h, w]` or `[h, w, c]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    /// method → OBZT tensor `[h, w]`
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub heatmaps: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_class: Option<TargetClass>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<CurveUpload>,
    #[serde(default = "yes")]
    pub score: bool,
}

fn yes() -> bool {
    true
}

impl IngestEnvelope {
    pub fn new(sample_id: impl Into<String>) -> Self {
        IngestEnvelope {
            sample_id: sample_id.into(),
            timestamp: None,
            prediction: Vec::new(),
            image: None,
            features: None,
            embedding: None,
            heatmaps: BTreeMap::new(),
            target_class: None,
            curves: Vec::new(),
            score: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestResponse {
    pub log_id: String,
    pub sample_id: String,
    pub verdicts: Vec<OutlierVerdict>,
    pub is_outlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPage {
    pub total: usize,
    pub offset: usize,
    pub items: Vec<LogRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub timestamp: Timestamp,
    /// Absent for logs without first-order features.
    pub value: Option<f64>,
    pub is_outlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub from: Timestamp,
    pub to: Timestamp,
    pub total_samples: usize,
    pub outlier_count: usize,
    pub series: BTreeMap<String, Vec<SeriesPoint>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefDistribution {
    pub min: f64,
    pub p10: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureComparison {
    pub kind: FeatureKind,
    pub name: String,
    pub value: Option<f64>,
    pub reference: RefDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogDetail {
    pub log: LogRecord,
    pub feature_comparison: Vec<FeatureComparison>,
}
