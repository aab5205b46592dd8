//! HTTP+JSON client for remote model servers.
//!
//! Each capability posts to its `/v1/*` endpoint with body
//! `{protocol_version, request_id, capability, payload, attachments}` where
//! `attachments` maps image sha256 to base64 PNG bytes. Errors come back as
//! a non-2xx status with `{code, message}`.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::blob::BlobStore;
use super::protocol::{BackendRequest, BackendResponse, BackendResult, Capability, ErrorBody, PROTOCOL_VERSION};
use super::{check_response, Backend, BackendError};

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub timeout: Duration,
    pub inflight_per_capability: usize,
    /// Directory that relative image paths in payloads resolve against.
    pub image_root: PathBuf,
    /// Where images returned inline are materialized.
    pub blob_root: PathBuf,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, image_root: impl Into<PathBuf>, blob_root: impl Into<PathBuf>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            timeout: Duration::from_secs(300),
            inflight_per_capability: 4,
            image_root: image_root.into(),
            blob_root: blob_root.into(),
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    #[serde(flatten)]
    request: &'a BackendRequest,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    attachments: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct WireResponse {
    #[serde(flatten)]
    response: BackendResponse,
    #[serde(default)]
    attachments: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub protocol_version: String,
    #[serde(default)]
    pub models: BTreeMap<String, String>,
}

struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self { permits: Mutex::new(permits.max(1)), available: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut permits = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap_or_else(|e| e.into_inner());
        }
        *permits -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.available.notify_one();
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    blobs: BlobStore,
    limits: HashMap<Capability, Semaphore>,
    calls: AtomicUsize,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let limits = Capability::ALL
            .into_iter()
            .map(|c| (c, Semaphore::new(config.inflight_per_capability)))
            .collect();
        let blobs = BlobStore::new(config.blob_root.clone());
        Self { config, agent, blobs, limits, calls: AtomicUsize::new(0) }
    }

    pub fn base_url(&self) -> &str {
        &self.config.base_url
    }

    /// `GET /healthz`.
    pub fn health(&self) -> Result<Health, BackendError> {
        let url = format!("{}/healthz", self.config.base_url);
        let mut resp = self.agent.get(&url).call().map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| BackendError::Unavailable(e.to_string()))?;
        if status != 200 {
            return Err(BackendError::Unavailable(format!("healthz returned {status}: {body}")));
        }
        let health: Health =
            serde_json::from_str(&body).map_err(|e| BackendError::ProtocolViolation(e.to_string()))?;
        if health.protocol_version != PROTOCOL_VERSION {
            return Err(BackendError::ProtocolViolation(format!(
                "server speaks {}, client speaks {PROTOCOL_VERSION}",
                health.protocol_version
            )));
        }
        Ok(health)
    }

    fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.config.image_root.join(p)
        }
    }

    fn attachments(&self, req: &BackendRequest) -> Result<BTreeMap<String, String>, BackendError> {
        let mut out = BTreeMap::new();
        for image in req.payload.images() {
            let bytes = std::fs::read(self.resolve(&image.path))?;
            out.insert(image.sha256.clone(), STANDARD.encode(bytes));
        }
        Ok(out)
    }
}

impl Backend for HttpBackend {
    fn call(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let capability = req.capability();
        let _permit = self.limits[&capability].acquire();
        let body = WireRequest { request: req, attachments: self.attachments(req)? };
        let url = format!("{}{}", self.config.base_url, capability.endpoint());

        self.calls.fetch_add(1, Ordering::Relaxed);
        let started = Instant::now();
        let mut resp = self
            .agent
            .post(&url)
            .send_json(&body)
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| BackendError::Unavailable(e.to_string()))?;

        if !(200..300).contains(&status) {
            let err: Option<ErrorBody> = serde_json::from_str(&text).ok();
            return Err(match (status, err) {
                (503, _) => BackendError::Unavailable(format!("{url} returned 503")),
                (_, Some(ErrorBody { code, message })) if code == "ProtocolViolation" => {
                    BackendError::ProtocolViolation(message)
                }
                (_, Some(ErrorBody { code, message })) => BackendError::Remote { code, message },
                (status, None) => BackendError::ProtocolViolation(format!("{url} returned {status}: {text}")),
            });
        }

        let wire: WireResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::ProtocolViolation(e.to_string()))?;
        let mut response = wire.response;
        if response.latency_ms == 0 {
            response.latency_ms = started.elapsed().as_millis() as u64;
        }
        check_response(req, &response)?;
        if let BackendResult::Image { image } = &mut response.result {
            if let Some(data) = wire.attachments.get(&image.sha256) {
                let bytes = STANDARD
                    .decode(data)
                    .map_err(|e| BackendError::ProtocolViolation(format!("attachment: {e}")))?;
                let stored = self.blobs.put(&bytes)?;
                if stored.sha256 != image.sha256 {
                    return Err(BackendError::ProtocolViolation("attachment hash mismatch".into()));
                }
                *image = stored;
            }
        }
        Ok(response)
    }

    fn remote_calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}
