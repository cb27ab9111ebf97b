//! The /v1 HTTP service.

use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use obz_core::detectors::{detect, fit_gmm, fit_pca, Detector, KSelection, RankPolicy};
use obz_core::stats::{quantile_sorted, sorted};
use obz_core::xai_eval::{compactness, CurveMode, fidelity_score, AttributionMap, PerturbationCurve};
use obz_core::{decode_tensor, extract_first_order, FeatureVector, ImageSample, Matrix, Timestamp, FEATURE_NAMES};
use serde::Deserialize;

use crate::error::StoreError;
use crate::records::{
    now, FeatureKind, FidelityEntry, LogQuery, LogRecord, ProjectRecord, RefFeatureSet, TaskMode,
};
use crate::storage::{Principal, Storage};
use crate::wire::*;

pub const MAX_BODY_BYTES: usize = 64 << 20;
const PROBABILITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", message)
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, "{}", self.message);
        }
        let body = ErrorBody { error: self.code.to_owned(), message: self.message };
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", message),
            StoreError::Forbidden => ApiError::new(StatusCode::FORBIDDEN, "forbidden", message),
            StoreError::Unauthorized => ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", message),
            StoreError::Conflict(_) => ApiError::conflict(message),
            StoreError::Invalid(_) => ApiError::unprocessable(message),
            StoreError::Corrupt(_) | StoreError::Io(_) => ApiError::internal(message),
        }
    }
}

impl From<obz_core::Error> for ApiError {
    fn from(e: obz_core::Error) -> Self {
        match e {
            obz_core::Error::NotCalibrated => ApiError::conflict(e.to_string()),
            obz_core::Error::InsufficientData { .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "insufficient_data", e.to_string())
            }
            _ => ApiError::unprocessable(e.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(e.status(), "invalid_body", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl From<tokio::task::JoinError> for ApiError {
    fn from(e: tokio::task::JoinError) -> Self {
        ApiError::internal(e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Inner {
    storage: Storage,
    default_quantile: f64,
    detectors: RwLock<HashMap<(String, FeatureKind), Arc<Detector>>>,
    fit_locks: std::sync::Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(storage: Storage, default_quantile: f64) -> Self {
        AppState(Arc::new(Inner {
            storage,
            default_quantile,
            detectors: RwLock::new(HashMap::new()),
            fit_locks: Default::default(),
        }))
    }

    pub fn storage(&self) -> &Storage {
        &self.0.storage
    }

    /// Current model for a project, loaded from the store on first use. Callers
    /// hold their own `Arc`, so a concurrent refit never changes a model mid-score.
    fn detector(&self, project_id: &str, kind: FeatureKind) -> ApiResult<Option<Arc<Detector>>> {
        let key = (project_id.to_owned(), kind);
        if let Some(d) = self.0.detectors.read().unwrap().get(&key) {
            return Ok(Some(d.clone()));
        }
        let Some(set) = self.0.storage.metadata().get_ref_set(project_id, kind)? else {
            return Ok(None);
        };
        let mut cache = self.0.detectors.write().unwrap();
        // a refit that raced us has already inserted the newer model
        Ok(Some(cache.entry(key).or_insert_with(|| Arc::new(set.detector)).clone()))
    }

    fn swap_detector(&self, project_id: &str, kind: FeatureKind, detector: Detector) {
        self.0
            .detectors
            .write()
            .unwrap()
            .insert((project_id.to_owned(), kind), Arc::new(detector));
    }

    fn fit_lock(&self, project_id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.0.fit_locks.lock().unwrap().entry(project_id.to_owned()).or_default().clone()
    }
}

/// The authenticated caller, from `Authorization: Bearer <token>`.
pub struct Auth(pub Principal);

impl FromRequestParts<AppState> for Auth {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing bearer token"))?;
        Ok(Auth(state.storage().authenticate(token)?))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(|| async { "ok" }))
        .route("/v1/me", get(whoami))
        .route("/v1/tokens", get(list_tokens))
        .route("/v1/tokens/{hash}", axum::routing::delete(revoke_token))
        .route("/v1/projects", get(list_projects).post(create_project))
        .route("/v1/projects/{id}", get(get_project))
        .route("/v1/projects/{id}/ref_features", post(upload_ref))
        .route("/v1/projects/{id}/detectors", get(get_detectors))
        .route("/v1/projects/{id}/logs", get(list_logs).post(ingest))
        .route("/v1/projects/{id}/summary", get(summary))
        .route("/v1/projects/{id}/export.csv", get(export_csv))
        .route("/v1/logs/{id}", get(get_log).delete(delete_log))
        .route("/v1/logs/{id}/image", get(get_image))
        .route("/v1/logs/{id}/heatmap/{method}", get(get_heatmap))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

async fn whoami(Auth(who): Auth) -> Json<Whoami> {
    Json(Whoami { user_id: who.user_id })
}

async fn list_tokens(State(st): State<AppState>, Auth(who): Auth) -> ApiResult<Json<Vec<TokenInfo>>> {
    let tokens = st.storage().list_tokens(&who)?;
    Ok(Json(
        tokens
            .into_iter()
            .map(|t| TokenInfo { token_hash: t.token_hash, created_at: t.created_at, revoked: t.revoked })
            .collect(),
    ))
}

async fn revoke_token(
    State(st): State<AppState>,
    Auth(who): Auth,
    Path(hash): Path<String>,
) -> ApiResult<StatusCode> {
    st.storage().revoke_token_hash(&who, &hash)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn list_projects(State(st): State<AppState>, Auth(who): Auth) -> ApiResult<Json<ProjectList>> {
    Ok(Json(ProjectList { projects: st.storage().list_projects(&who)? }))
}

async fn create_project(
    State(st): State<AppState>,
    Auth(who): Auth,
    body: Result<Json<CreateProject>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<ProjectRecord>)> {
    let Json(body) = body?;
    let p = st.storage().create_project(&who, &body.name, body.task_mode)?;
    Ok((StatusCode::CREATED, Json(p)))
}

async fn get_project(
    State(st): State<AppState>,
    Auth(who): Auth,
    Path(id): Path<String>,
) -> ApiResult<Json<ProjectRecord>> {
    Ok(Json(st.storage().project(&who, &id)?))
}

#[derive(Debug, Default, Deserialize)]
struct RefParams {
    #[serde(default)]
    refit: bool,
}

async fn upload_ref(
    State(st): State<AppState>,
    Auth(who): Auth,
    Path(id): Path<String>,
    params: Result<Query<RefParams>, QueryRejection>,
    body: Result<Json<RefUpload>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<RefResponse>)> {
    let Query(params) = params?;
    st.storage().project(&who, &id)?;
    let Json(upload) = body?;
    let kind = upload.kind.unwrap_or_else(|| infer_kind(&upload.feature_names));

    let lock = st.fit_lock(&id);
    let _guard = lock.lock().await;
    if !params.refit && st.storage().ref_set(&who, &id, kind)?.is_some() {
        return Err(ApiError::conflict(format!(
            "project already has a {} reference; pass refit=true to replace it",
            kind_name(kind)
        )));
    }
    let quantile = upload.quantile.unwrap_or(st.0.default_quantile);
    let (matrix, detector, summary) =
        tokio::task::spawn_blocking(move || fit_reference(upload, kind, quantile)).await??;
    let set = RefFeatureSet {
        project_id: id.clone(),
        kind,
        feature_names: detector_names(&detector),
        matrix,
        detector: detector.clone(),
        created_at: now(),
    };
    let storage = st.storage().clone();
    let who2 = who.clone();
    tokio::task::spawn_blocking(move || storage.put_ref_set(&who2, set)).await??;
    st.swap_detector(&id, kind, detector);
    tracing::info!(project = %id, kind = kind_name(kind), "reference fitted");
    Ok((StatusCode::CREATED, Json(RefResponse { models: vec![summary] })))
}

fn infer_kind(names: &[String]) -> FeatureKind {
    if names.iter().map(String::as_str).eq(FEATURE_NAMES) {
        FeatureKind::Fof
    } else {
        FeatureKind::Embedding
    }
}

fn kind_name(kind: FeatureKind) -> &'static str {
    match kind {
        FeatureKind::Fof => "fof",
        FeatureKind::Embedding => "embedding",
    }
}

fn detector_names(d: &Detector) -> Vec<String> {
    match d {
        Detector::Gmm(m) => m.feature_names.clone(),
        Detector::Pca(m) => m.feature_names.clone(),
    }
}

/// Fits and calibrates the detector for one reference matrix.
pub fn fit_reference(
    upload: RefUpload,
    kind: FeatureKind,
    quantile: f64,
) -> ApiResult<(Matrix, Detector, ModelSummary)> {
    let names = upload.feature_names;
    if names.is_empty() {
        return Err(ApiError::unprocessable("feature_names is empty"));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
        return Err(ApiError::unprocessable(format!("duplicate feature name {dup:?}")));
    }
    if kind == FeatureKind::Fof && !names.iter().map(String::as_str).eq(FEATURE_NAMES) {
        return Err(ApiError::unprocessable(format!(
            "fof references need exactly these columns in order: {}",
            FEATURE_NAMES.join(",")
        )));
    }
    if let Some(i) = upload.rows.iter().position(|r| r.len() != names.len()) {
        return Err(ApiError::unprocessable(format!(
            "row {i} has {} values for {} columns",
            upload.rows[i].len(),
            names.len()
        )));
    }
    if upload.rows.is_empty() {
        return Err(obz_core::Error::InsufficientData { needed: 2, got: 0 }.into());
    }
    let matrix = Matrix::from_rows(&upload.rows)?;
    if !matrix.all_finite() {
        return Err(ApiError::unprocessable("reference matrix has non-finite values"));
    }
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(ApiError::unprocessable(format!("quantile {quantile} outside (0, 1]")));
    }
    let rows = matrix.rows();
    let (detector, summary) = match kind {
        FeatureKind::Fof => {
            let k = upload.k.map_or(KSelection::Auto, KSelection::Fixed);
            let mut model = fit_gmm(&matrix, k, upload.seed.unwrap_or(0))?.model.with_feature_names(names)?;
            let threshold = model.calibrate(&matrix, quantile)?;
            let summary = ModelSummary {
                kind,
                detector: obz_core::DetectorKind::Gmm,
                rows,
                dim: model.dim(),
                k: Some(model.k),
                r: None,
                quantile,
                threshold,
            };
            (Detector::Gmm(model), summary)
        }
        FeatureKind::Embedding => {
            let policy = match (upload.rank, upload.variance_fraction) {
                (Some(r), _) => RankPolicy::Explicit(r),
                (None, Some(f)) => RankPolicy::VarianceFraction(f),
                (None, None) => RankPolicy::default(),
            };
            let mut model = fit_pca(&matrix, policy)?.with_feature_names(names)?;
            let threshold = model.calibrate(&matrix, quantile)?;
            let summary = ModelSummary {
                kind,
                detector: obz_core::DetectorKind::Pca,
                rows,
                dim: model.dim(),
                k: None,
                r: Some(model.r),
                quantile,
                threshold,
            };
            (Detector::Pca(model), summary)
        }
    };
    Ok((matrix, detector, summary))
}

async fn get_detectors(
    State(st): State<AppState>,
    Auth(who): Auth,
    Path(id): Path<String>,
) -> ApiResult<Json<DetectorSet>> {
    st.storage().project(&who, &id)?;
    Ok(Json(DetectorSet {
        gmm: st.detector(&id, FeatureKind::Fof)?.map(|d| (*d).clone()),
        pca: st.detector(&id, FeatureKind::Embedding)?.map(|d| (*d).clone()),
    }))
}

async fn ingest(
    State(st): State<AppState>,
    Auth(who): Auth,
    Path(id): Path<String>,
    body: Result<Json<IngestEnvelope>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<IngestResponse>)> {
    let project = st.storage().project(&who, &id)?;
    let Json(env) = body?;
    let resp = tokio::task::spawn_blocking(move || ingest_blocking(&st, &who, &project, env)).await??;
    Ok((StatusCode::CREATED, Json(resp)))
}

fn decode_b64(field: &str, s: &str) -> ApiResult<Vec<u8>> {
    base64::engine::general_purpose::STANDARD
        .decode(s.trim())
        .map_err(|e| ApiError::unprocessable(format!("{field}: bad base64: {e}")))
}

fn image_from_tensor(bytes: &[u8]) -> ApiResult<ImageSample> {
    let t = decode_tensor(bytes).map_err(|e| ApiError::unprocessable(format!("image: {e}")))?;
    crate::imageio::image_from_tensor(&t).map_err(|e| ApiError::unprocessable(format!("image: {e}")))
}

fn validate_predictions(env: &IngestEnvelope, mode: TaskMode) -> ApiResult<()> {
    for p in &env.prediction {
        if !(0.0..=1.0).contains(&p.probability) {
            return Err(ApiError::unprocessable(format!(
                "probability {} for {:?} outside [0, 1]",
                p.probability, p.label
            )));
        }
    }
    match mode {
        TaskMode::Classification if !env.prediction.is_empty() => {
            let sum: f64 = env.prediction.iter().map(|p| p.probability).sum();
            if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
                return Err(ApiError::unprocessable(format!("probabilities sum to {sum}, not 1")));
            }
        }
        _ => {}
    }
    Ok(())
}

fn ingest_blocking(
    st: &AppState,
    who: &Principal,
    project: &ProjectRecord,
    env: IngestEnvelope,
) -> ApiResult<IngestResponse> {
    if env.image.is_none() && env.features.is_none() && env.embedding.is_none() {
        return Err(ApiError::unprocessable("envelope needs an image, features or an embedding"));
    }
    validate_predictions(&env, project.task_mode)?;
    if let Some(e) = &env.embedding {
        if e.is_empty() || e.iter().any(|v| !v.is_finite()) {
            return Err(ApiError::unprocessable("embedding must be non-empty and finite"));
        }
    }

    let image = match &env.image {
        Some(b64) => {
            let bytes = decode_b64("image", b64)?;
            let img = image_from_tensor(&bytes)?;
            Some((bytes, img))
        }
        None => None,
    };
    // client-computed features win over server extraction
    let features: Option<FeatureVector> = match (&env.features, &image) {
        (Some(f), _) => Some(*f),
        (None, Some((_, img))) => Some(extract_first_order(img)?),
        (None, None) => None,
    };

    let mut heatmap_blobs = Vec::new();
    let mut compact = BTreeMap::new();
    for (method, b64) in &env.heatmaps {
        if method.is_empty() || method.contains('/') || crate::blob::validate_key(method).is_err() {
            return Err(ApiError::unprocessable(format!("bad heatmap method name {method:?}")));
        }
        let bytes = decode_b64(&format!("heatmaps.{method}"), b64)?;
        let t = decode_tensor(&bytes).map_err(|e| ApiError::unprocessable(format!("heatmaps.{method}: {e}")))?;
        let [h, w] = t.dims[..] else {
            return Err(ApiError::unprocessable(format!("heatmaps.{method} must be 2-D")));
        };
        let (h, w) = (h as usize, w as usize);
        if let Some((_, img)) = &image {
            if (img.height(), img.width()) != (h, w) {
                return Err(ApiError::unprocessable(format!(
                    "heatmaps.{method} is {h}x{w} but the image is {}x{}",
                    img.height(),
                    img.width()
                )));
            }
        }
        let map = AttributionMap::new(h, w, t.values.iter().map(|&v| v as f64).collect(), method.clone())?;
        compact.insert(method.clone(), compactness(&map)?);
        heatmap_blobs.push((method.clone(), bytes));
    }

    let mut fidelity = BTreeMap::new();
    for c in &env.curves {
        let curve = PerturbationCurve::new(c.fractions.clone(), c.scores.clone(), c.mode)?;
        let mode = match c.mode {
            CurveMode::Deletion => "deletion",
            CurveMode::Insertion => "insertion",
        };
        let key = format!("{}.{mode}", c.method);
        fidelity.insert(key, FidelityEntry { mode: c.mode, score: fidelity_score(&curve)? });
    }

    let mut verdicts = Vec::new();
    if env.score {
        if let Some(f) = &features {
            if let Some(d) = st.detector(&project.project_id, FeatureKind::Fof)? {
                verdicts.push(detect(&d, f.values())?);
            }
        }
        if let Some(e) = &env.embedding {
            if let Some(d) = st.detector(&project.project_id, FeatureKind::Embedding)? {
                verdicts.push(detect(&d, e)?);
            }
        }
        if verdicts.is_empty() {
            return Err(ApiError::conflict("scoring requested but no matching reference has been fitted"));
        }
    }

    let log_id = uuid::Uuid::new_v4().to_string();
    let mut log = LogRecord::new(
        log_id.clone(),
        project.project_id.clone(),
        env.sample_id.clone(),
        env.timestamp.unwrap_or_else(now),
    );
    log.prediction = env.prediction;
    log.features = features;
    log.embedding = env.embedding;
    log.verdicts = verdicts.clone();
    log.target_class = env.target_class;
    log.compactness = compact;
    log.fidelity = fidelity;

    let storage = st.storage();
    let pid = &project.project_id;
    let mut written = Vec::new();
    let result = (|| {
        if let Some((bytes, _)) = &image {
            let key = format!("logs/{log_id}/image.obzt");
            storage.put_blob(who, pid, &key, bytes)?;
            written.push(key.clone());
            log.image_key = Some(key);
        }
        for (method, bytes) in &heatmap_blobs {
            let key = format!("logs/{log_id}/heatmaps/{method}.obzt");
            storage.put_blob(who, pid, &key, bytes)?;
            written.push(key.clone());
            log.heatmap_keys.insert(method.clone(), key);
        }
        storage.insert_log(who, log)
    })();
    if let Err(e) = result {
        for key in &written {
            let _ = storage.delete_blob(pid, key);
        }
        return Err(e.into());
    }
    let is_outlier = verdicts.iter().any(|v| v.is_outlier);
    Ok(IngestResponse { log_id, sample_id: env.sample_id, verdicts, is_outlier })
}

#[derive(Debug, Default, Deserialize)]
struct WindowParams {
    from: Option<i64>,
    to: Option<i64>,
    #[serde(default)]
    outlier_only: bool,
    limit: Option<usize>,
    #[serde(default)]
    offset: usize,
    metrics: Option<String>,
}

impl WindowParams {
    fn query(&self, project_id: &str) -> ApiResult<LogQuery> {
        let from = self.from.unwrap_or(i64::MIN);
        let to = self.to.unwrap_or(i64::MAX);
        if from > to {
            return Err(ApiError::bad_request(format!("from ({from}) is after to ({to})")));
        }
        Ok(LogQuery {
            project_id: project_id.to_owned(),
            from: Timestamp(from),
            to: Timestamp(to),
            outlier_only: self.outlier_only,
            limit: None,
            offset: 0,
        })
    }
}

async fn list_logs(
    State(st): State<AppState>,
    Auth(who): Auth,
    Path(id): Path<String>,
    params: Result<Query<WindowParams>, QueryRejection>,
) -> ApiResult<Json<LogPage>> {
    let Query(params) = params?;
    let q = params.query(&id)?;
    let all = st.storage().query_logs(&who, &q)?;
    let total = all.len();
    let items = all
        .into_iter()
        .skip(params.offset)
        .take(params.limit.unwrap_or(usize::MAX))
        .collect();
    Ok(Json(LogPage { total, offset: params.offset, items }))
}

async fn summary(
    State(st): State<AppState>,
    Auth(who): Auth,
    Path(id): Path<String>,
    params: Result<Query<WindowParams>, QueryRejection>,
) -> ApiResult<Json<SummaryReport>> {
    let Query(params) = params?;
    let q = params.query(&id)?;
    st.storage().project(&who, &id)?;
    let metrics: Vec<&str> = params
        .metrics
        .as_deref()
        .unwrap_or("")
        .split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .collect();
    if let Some(bad) = metrics.iter().find(|m| !FEATURE_NAMES.contains(m)) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "unknown_metric",
            format!("unknown metric {bad:?}; valid metrics: {}", FEATURE_NAMES.join(",")),
        ));
    }
    let logs = st.storage().query_logs(&who, &q)?;
    let series = metrics
        .iter()
        .map(|m| {
            let points = logs
                .iter()
                .map(|l| SeriesPoint {
                    timestamp: l.timestamp,
                    value: l.features.as_ref().and_then(|f| f.get(m)),
                    is_outlier: l.is_outlier(),
                })
                .collect();
            (m.to_string(), points)
        })
        .collect();
    Ok(Json(SummaryReport {
        from: q.from,
        to: q.to,
        total_samples: logs.len(),
        outlier_count: logs.iter().filter(|l| l.is_outlier()).count(),
        series,
    }))
}

async fn export_csv(
    State(st): State<AppState>,
    Auth(who): Auth,
    Path(id): Path<String>,
    params: Result<Query<WindowParams>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(params) = params?;
    let logs = st.storage().query_logs(&who, &params.query(&id)?)?;
    let mut buf = Vec::new();
    crate::csvio::write_export(&mut buf, &logs).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], buf).into_response())
}

fn distribution(column: &[f64]) -> RefDistribution {
    let s = sorted(column);
    RefDistribution {
        min: s[0],
        p10: quantile_sorted(&s, 0.1),
        median: quantile_sorted(&s, 0.5),
        p90: quantile_sorted(&s, 0.9),
        max: s[s.len() - 1],
    }
}

async fn get_log(
    State(st): State<AppState>,
    Auth(who): Auth,
    Path(id): Path<String>,
) -> ApiResult<Json<LogDetail>> {
    let log = st.storage().get_log(&who, &id)?;
    let mut feature_comparison = Vec::new();
    for kind in [FeatureKind::Fof, FeatureKind::Embedding] {
        let Some(set) = st.storage().ref_set(&who, &log.project_id, kind)? else { continue };
        if set.matrix.rows() == 0 {
            continue;
        }
        for (j, name) in set.feature_names.iter().enumerate() {
            let value = match kind {
                FeatureKind::Fof => log.features.as_ref().and_then(|f| f.get(name)),
                FeatureKind::Embedding => log.embedding.as_ref().and_then(|e| e.get(j).copied()),
            };
            feature_comparison.push(FeatureComparison {
                kind,
                name: name.clone(),
                value,
                reference: distribution(&set.matrix.column(j)),
            });
        }
    }
    Ok(Json(LogDetail { log, feature_comparison }))
}

fn tensor_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response()
}

async fn get_image(State(st): State<AppState>, Auth(who): Auth, Path(id): Path<String>) -> ApiResult<Response> {
    let log = st.storage().get_log(&who, &id)?;
    let key = log
        .image_key
        .ok_or_else(|| ApiError::from(StoreError::NotFound(format!("image for log {id}"))))?;
    Ok(tensor_response(st.storage().get_blob(&who, &log.project_id, &key)?))
}

async fn get_heatmap(
    State(st): State<AppState>,
    Auth(who): Auth,
    Path((id, method)): Path<(String, String)>,
) -> ApiResult<Response> {
    let log = st.storage().get_log(&who, &id)?;
    let key = log
        .heatmap_keys
        .get(&method)
        .ok_or_else(|| ApiError::from(StoreError::NotFound(format!("heatmap {method:?} for log {id}"))))?;
    Ok(tensor_response(st.storage().get_blob(&who, &log.project_id, key)?))
}

async fn delete_log(State(st): State<AppState>, Auth(who): Auth, Path(id): Path<String>) -> ApiResult<StatusCode> {
    let storage = st.storage().clone();
    tokio::task::spawn_blocking(move || storage.delete_log(&who, &id)).await??;
    Ok(StatusCode::NO_CONTENT)
}
