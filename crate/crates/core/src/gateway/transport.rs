use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportRequest {
    pub method: Method,
    pub url: String,
    pub body: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportResponse {
    pub status: u16,
    pub body: String,
}

/// Failure to obtain any response at all.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("connection refused: {0}")]
    Refused(String),
    #[error("request timed out")]
    Timeout,
    #[error("transport: {0}")]
    Other(String),
}

#[async_trait]
pub trait Transport: Send + Sync {
    async fn send(&self, req: &TransportRequest) -> Result<TransportResponse, TransportError>;
}

#[derive(Debug, Clone)]
pub struct HttpTransport {
    client: reqwest::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Other(e.to_string()))?;
        Ok(Self { client })
    }
}

#[async_trait]
impl Transport for HttpTransport {
    async fn send(&self, req: &TransportRequest) -> Result<TransportResponse, TransportError> {
        let builder = match req.method {
            Method::Get => self.client.get(&req.url),
            Method::Post => self.client.post(&req.url),
        };
        let builder = match &req.body {
            Some(body) => builder.body(body.clone()),
            None => builder,
        };
        let response = builder.send().await.map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else if e.is_connect() {
                TransportError::Refused(e.to_string())
            } else {
                TransportError::Other(e.to_string())
            }
        })?;
        let status = response.status().as_u16();
        let body = response.text().await.map_err(|e| TransportError::Other(e.to_string()))?;
        Ok(TransportResponse { status, body })
    }
}

/// One recorded exchange. `body` must match the request body exactly when
/// present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub method: Method,
    pub url: String,
    #[serde(default)]
    pub body: Option<String>,
    pub status: u16,
    pub file: PathBuf,
}

/// Replays recorded response bodies from a directory holding
/// `manifest.json` (a list of [`FixtureEntry`]) plus the body files.
/// Unmatched requests are refused.
#[derive(Debug, Clone)]
pub struct FixtureTransport {
    dir: PathBuf,
    entries: Vec<FixtureEntry>,
}

impl FixtureTransport {
    pub fn load(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest = std::fs::read_to_string(dir.join("manifest.json"))?;
        let entries = serde_json::from_str(&manifest).map_err(std::io::Error::other)?;
        Ok(Self { dir, entries })
    }

    pub fn entries(&self) -> &[FixtureEntry] {
        &self.entries
    }
}

#[async_trait]
impl Transport for FixtureTransport {
    async fn send(&self, req: &TransportRequest) -> Result<TransportResponse, TransportError> {
        let entry = self
            .entries
            .iter()
            .find(|e| {
                e.method == req.method
                    && e.url == req.url
                    && e.body.as_ref().is_none_or(|b| Some(b) == req.body.as_ref())
            })
            .ok_or_else(|| TransportError::Refused(format!("no fixture for {:?} {}", req.method, req.url)))?;
        let body = std::fs::read_to_string(self.dir.join(&entry.file)).map_err(|e| TransportError::Other(e.to_string()))?;
        Ok(TransportResponse { status: entry.status, body })
    }
}

/// Wraps a transport and counts the requests that reach it.
#[derive(Debug, Default)]
pub struct CountingTransport<T> {
    inner: T,
    calls: AtomicUsize,
}

impl<T> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl<T: Transport> Transport for CountingTransport<T> {
    async fn send(&self, req: &TransportRequest) -> Result<TransportResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.send(req).await
    }
}

/// Refuses every request.
#[derive(Debug, Clone, Copy, Default)]
pub struct RefusingTransport;

#[async_trait]
impl Transport for RefusingTransport {
    async fn send(&self, req: &TransportRequest) -> Result<TransportResponse, TransportError> {
        Err(TransportError::Refused(req.url.clone()))
    }
}
