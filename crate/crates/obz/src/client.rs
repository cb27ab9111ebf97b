//! Blocking HTTP client for the /v1 API.

use reqwest::blocking::{RequestBuilder, Response};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::ClientConfig;
use crate::records::ProjectRecord;
use crate::wire::*;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("cannot reach server: {0}")]
    Connect(String),
    #[error("server returned {status}: {message}")]
    Api { status: u16, error: String, message: String },
    #[error("unexpected response: {0}")]
    Decode(String),
    #[error("no API token configured (use --token, OBZ_TOKEN or the config file)")]
    NoToken,
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }
}

impl From<reqwest::Error> for ClientError {
    fn from(e: reqwest::Error) -> Self {
        if e.is_connect() || e.is_timeout() {
            ClientError::Connect(e.to_string())
        } else {
            ClientError::Decode(e.to_string())
        }
    }
}

pub type ClientResult<T> = Result<T, ClientError>;

/// Window and paging filters shared by the read endpoints.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Window {
    pub from: Option<i64>,
    pub to: Option<i64>,
    pub outlier_only: bool,
    pub limit: Option<usize>,
    pub offset: usize,
    pub metrics: Vec<String>,
}

impl Window {
    fn query_string(&self) -> String {
        let mut parts = Vec::new();
        if let Some(f) = self.from {
            parts.push(format!("from={f}"));
        }
        if let Some(t) = self.to {
            parts.push(format!("to={t}"));
        }
        if self.outlier_only {
            parts.push("outlier_only=true".into());
        }
        if let Some(l) = self.limit {
            parts.push(format!("limit={l}"));
        }
        if self.offset > 0 {
            parts.push(format!("offset={}", self.offset));
        }
        if !self.metrics.is_empty() {
            parts.push(format!("metrics={}", encode_component(&self.metrics.join(","))));
        }
        if parts.is_empty() {
            String::new()
        } else {
            format!("?{}", parts.join("&"))
        }
    }
}

/// Percent-encodes everything outside the RFC 3986 unreserved set.
pub fn encode_component(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-._~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

#[derive(Clone)]
pub struct Client {
    http: reqwest::blocking::Client,
    base: String,
    token: Option<String>,
}

impl Client {
    pub fn new(config: &ClientConfig) -> ClientResult<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ClientError::Connect(e.to_string()))?;
        Ok(Client { http, base: config.server_url.clone(), token: config.api_token.clone() })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn authed(&self, rb: RequestBuilder) -> ClientResult<RequestBuilder> {
        let token = self.token.as_deref().ok_or(ClientError::NoToken)?;
        Ok(rb.bearer_auth(token))
    }

    fn send(&self, rb: RequestBuilder) -> ClientResult<Response> {
        let resp = self.authed(rb)?.send()?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().unwrap_or_default();
        let (error, message) = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(b) => (b.error, b.message),
            Err(_) => (status.canonical_reason().unwrap_or("error").to_lowercase(), text),
        };
        Err(ClientError::Api { status: status.as_u16(), error, message })
    }

    fn json<T: DeserializeOwned>(&self, rb: RequestBuilder) -> ClientResult<T> {
        let text = self.send(rb)?.text()?;
        serde_json::from_str(&text).map_err(|e| ClientError::Decode(e.to_string()))
    }

    fn post_json<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> ClientResult<T> {
        let body = serde_json::to_vec(body).map_err(|e| ClientError::Decode(e.to_string()))?;
        self.json(
            self.http
                .post(self.url(path))
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(body),
        )
    }

    fn bytes(&self, path: &str) -> ClientResult<Vec<u8>> {
        Ok(self.send(self.http.get(self.url(path)))?.bytes()?.to_vec())
    }

    pub fn whoami(&self) -> ClientResult<Whoami> {
        self.json(self.http.get(self.url("/v1/me")))
    }

    pub fn list_tokens(&self) -> ClientResult<Vec<TokenInfo>> {
        self.json(self.http.get(self.url("/v1/tokens")))
    }

    pub fn revoke_token_hash(&self, hash: &str) -> ClientResult<()> {
        self.send(self.http.delete(self.url(&format!("/v1/tokens/{}", encode_component(hash)))))?;
        Ok(())
    }

    pub fn list_projects(&self) -> ClientResult<Vec<ProjectRecord>> {
        Ok(self.json::<ProjectList>(self.http.get(self.url("/v1/projects")))?.projects)
    }

    pub fn create_project(&self, name: &str) -> ClientResult<ProjectRecord> {
        self.post_json("/v1/projects", &CreateProject { name: name.into(), task_mode: Default::default() })
    }

    pub fn project(&self, id: &str) -> ClientResult<ProjectRecord> {
        self.json(self.http.get(self.url(&format!("/v1/projects/{}", encode_component(id)))))
    }

    pub fn upload_ref(&self, project: &str, upload: &RefUpload, refit: bool) -> ClientResult<RefResponse> {
        let q = if refit { "?refit=true" } else { "" };
        self.post_json(&format!("/v1/projects/{}/ref_features{q}", encode_component(project)), upload)
    }

    pub fn detectors(&self, project: &str) -> ClientResult<DetectorSet> {
        self.json(self.http.get(self.url(&format!("/v1/projects/{}/detectors", encode_component(project)))))
    }

    pub fn ingest(&self, project: &str, env: &IngestEnvelope) -> ClientResult<IngestResponse> {
        self.post_json(&format!("/v1/projects/{}/logs", encode_component(project)), env)
    }

    pub fn list_logs(&self, project: &str, w: &Window) -> ClientResult<LogPage> {
        let path = format!("/v1/projects/{}/logs{}", encode_component(project), w.query_string());
        self.json(self.http.get(self.url(&path)))
    }

    pub fn summary(&self, project: &str, w: &Window) -> ClientResult<SummaryReport> {
        let path = format!("/v1/projects/{}/summary{}", encode_component(project), w.query_string());
        self.json(self.http.get(self.url(&path)))
    }

    pub fn export_csv(&self, project: &str, w: &Window) -> ClientResult<Vec<u8>> {
        self.bytes(&format!("/v1/projects/{}/export.csv{}", encode_component(project), w.query_string()))
    }

    pub fn log(&self, log_id: &str) -> ClientResult<LogDetail> {
        self.json(self.http.get(self.url(&format!("/v1/logs/{}", encode_component(log_id)))))
    }

    pub fn heatmap(&self, log_id: &str, method: &str) -> ClientResult<Vec<u8>> {
        self.bytes(&format!("/v1/logs/{}/heatmap/{}", encode_component(log_id), encode_component(method)))
    }

    pub fn image(&self, log_id: &str) -> ClientResult<Vec<u8>> {
        self.bytes(&format!("/v1/logs/{}/image", encode_component(log_id)))
    }

    pub fn delete_log(&self, log_id: &str) -> ClientResult<()> {
        let resp = self.send(self.http.delete(self.url(&format!("/v1/logs/{}", encode_component(log_id)))))?;
        if resp.status() != StatusCode::NO_CONTENT {
            return Err(ClientError::Decode(format!("expected 204, got {}", resp.status())));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_query() {
        assert_eq!(Window::default().query_string(), "");
        let w = Window {
            from: Some(-5),
            to: Some(10),
            outlier_only: true,
            limit: Some(3),
            offset: 2,
            metrics: vec!["mean".into(), "std".into()],
        };
        assert_eq!(w.query_string(), "?from=-5&to=10&outlier_only=true&limit=3&offset=2&metrics=mean%2Cstd");
    }

    #[test]
    fn percent_encoding() {
        assert_eq!(encode_component("a b/c?d"), "a%20b%2Fc%3Fd");
        assert_eq!(encode_component("grad-cam_v1.2~"), "grad-cam_v1.2~");
    }
}
