use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::blob::{verify_blob, BlobStore};
use super::protocol::{BackendRequest, BackendResponse, BackendResult, Capability, PROTOCOL_VERSION};
use super::{check_response, Backend, BackendError};

/// Sidecar record stored next to each cached response.
#[derive(Debug, Serialize, Deserialize)]
struct CacheMeta {
    request_id: String,
    capability: Capability,
    protocol_version: String,
    model_id: String,
}

/// Read-through response cache at `<root>/<capability>/<request_id>`.
/// Images returned by the inner backend are copied to `<root>/blobs`.
pub struct CachedBackend<B> {
    inner: B,
    root: PathBuf,
    blobs: BlobStore,
    lock: RwLock<()>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<B: Backend> CachedBackend<B> {
    pub fn new(inner: B, root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        let blobs = BlobStore::new(root.join("blobs"));
        Self {
            inner,
            root,
            blobs,
            lock: RwLock::new(()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    fn entry_path(&self, req: &BackendRequest) -> PathBuf {
        self.root.join(req.capability().as_str()).join(&req.request_id)
    }

    fn lookup(&self, req: &BackendRequest) -> Option<BackendResponse> {
        let _guard = self.lock.read().unwrap_or_else(|e| e.into_inner());
        let bytes = fs::read(self.entry_path(req)).ok()?;
        let response: BackendResponse = serde_json::from_slice(&bytes).ok()?;
        if check_response(req, &response).is_err() {
            return None;
        }
        if let BackendResult::Image { image } = &response.result {
            if !verify_blob(image) {
                return None;
            }
        }
        Some(response)
    }

    fn store(&self, req: &BackendRequest, response: &BackendResponse) -> Result<(), BackendError> {
        let _guard = self.lock.write().unwrap_or_else(|e| e.into_inner());
        let path = self.entry_path(req);
        let dir = path.parent().expect("entry has a parent");
        fs::create_dir_all(dir)?;
        let body = serde_json::to_vec_pretty(response).expect("response serializes");
        let tmp = dir.join(format!(".{}.tmp", req.request_id));
        fs::write(&tmp, body)?;
        fs::rename(&tmp, &path)?;
        let meta = CacheMeta {
            request_id: req.request_id.clone(),
            capability: req.capability(),
            protocol_version: PROTOCOL_VERSION.to_string(),
            model_id: response.model_id.clone(),
        };
        let meta_path = dir.join(format!("{}.meta.json", req.request_id));
        fs::write(meta_path, serde_json::to_vec_pretty(&meta).expect("meta serializes"))?;
        Ok(())
    }
}

impl<B: Backend> Backend for CachedBackend<B> {
    fn call(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        if let Some(hit) = self.lookup(req) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let mut response = self.inner.call(req)?;
        check_response(req, &response)?;
        if let BackendResult::Image { image } = &mut response.result {
            *image = self.blobs.import(image)?;
        }
        self.store(req, &response)?;
        Ok(response)
    }

    fn remote_calls(&self) -> usize {
        self.inner.remote_calls()
    }
}
