#![allow(dead_code)]

pub mod isolation;

use std::path::{Path, PathBuf};
use std::time::Duration;

use obz::api::AppState;
use obz::client::Client;
use obz::config::ClientConfig;
use obz::storage::Storage;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const SIDE: usize = 16;

/// A file-backed service on an ephemeral port, shut down on drop.
pub struct TestServer {
    pub url: String,
    pub root: PathBuf,
    _dir: Option<tempfile::TempDir>,
    rt: Option<tokio::runtime::Runtime>,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
}

impl TestServer {
    pub fn start() -> Self {
        Self::start_with_quantile(0.99)
    }

    pub fn start_with_quantile(q: f64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_owned();
        let mut s = Self::start_at(&root, q);
        s._dir = Some(dir);
        s
    }

    pub fn start_at(root: &Path, q: f64) -> Self {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().unwrap();
        let storage = Storage::open_dir(root).unwrap();
        let state = AppState::new(storage, q);
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        rt.spawn(obz::api::serve(listener, state, async {
            let _ = rx.await;
        }));
        TestServer { url, root: root.to_owned(), _dir: None, rt: Some(rt), stop: Some(tx) }
    }

    /// Issues a token through a separate store handle, as the admin command does.
    pub fn token(&self, user: &str) -> String {
        Storage::open_dir(&self.root).unwrap().issue_token(user).unwrap()
    }

    pub fn client(&self, token: &str) -> Client {
        Client::new(&ClientConfig {
            server_url: self.url.clone(),
            api_token: Some(token.to_owned()),
            default_project: None,
            timeout: Duration::from_secs(60),
        })
        .unwrap()
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(rt) = self.rt.take() {
            rt.shutdown_timeout(Duration::from_secs(5));
        }
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// 16-bit grayscale image: per-image base level and contrast around Gaussian noise.
pub fn ref_image(rng: &mut ChaCha8Rng) -> Vec<u16> {
    let base = Normal::new(1000.0, 50.0).unwrap().sample(rng);
    let contrast = rng.random_range(80.0..120.0);
    let noise = Normal::new(0.0, 1.0).unwrap();
    (0..SIDE * SIDE)
        .map(|_| {
            let v: f64 = base + contrast * noise.sample(rng);
            v.round().clamp(0.0, 65535.0) as u16
        })
        .collect()
}

pub fn shifted(img: &[u16], by: f64) -> Vec<u16> {
    img.iter().map(|&p| (p as f64 + by).round().clamp(0.0, 65535.0) as u16).collect()
}

pub fn pgm(img: &[u16]) -> Vec<u8> {
    obz::pgm::encode(SIDE, SIDE, 65535, img)
}

pub fn obzt(img: &[u16]) -> Vec<u8> {
    let v: Vec<f32> = img.iter().map(|&p| p as f32).collect();
    obz_core::encode_tensor(&[SIDE as u32, SIDE as u32], &v).unwrap()
}

pub fn fof(img: &[u16]) -> obz_core::FeatureVector {
    let px = img.iter().map(|&p| p as f64).collect();
    obz_core::extract_first_order(&obz_core::ImageSample::new(SIDE, SIDE, px).unwrap()).unwrap()
}

pub fn b64(bytes: &[u8]) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

pub fn fof_upload(rows: Vec<Vec<f64>>) -> obz::wire::RefUpload {
    obz::wire::RefUpload {
        feature_names: obz_core::FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        rows,
        kind: None,
        k: None,
        rank: None,
        variance_fraction: None,
        quantile: None,
        seed: Some(7),
    }
}
