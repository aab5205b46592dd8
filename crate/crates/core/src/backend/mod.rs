//! Five-capability backend protocol: text generation, image generation,
//! detection, VQA and embeddings, with a content-addressed response cache,
//! scriptable mocks and an HTTP+JSON client.

mod blob;
mod cache;
pub mod canonical;
mod http;
mod mock;
pub mod protocol;

use std::sync::Arc;

pub use blob::BlobStore;
pub use cache::CachedBackend;
pub use canonical::{cache_key, canonical_json};
pub use http::{HttpBackend, HttpConfig};
pub use mock::{EchoLabels, Fixture, FixtureResponse, MockBackend, MockMode, MockScript};
pub use protocol::*;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("mock script has no fixture for {capability:?} request {request_id}")]
    MockMiss { capability: Capability, request_id: String },
    #[error("malformed mock script: {0}")]
    MalformedScript(String),
    #[error("backend returned {code}: {message}")]
    Remote { code: String, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl BackendError {
    /// Transport-level failures that the pipeline records as Errored.
    pub fn is_unavailable(&self) -> bool {
        matches!(self, BackendError::Unavailable(_) | BackendError::Io(_))
    }
}

impl From<std::io::Error> for BackendError {
    fn from(e: std::io::Error) -> Self {
        BackendError::Io(e.to_string())
    }
}

pub trait Backend: Send + Sync {
    fn call(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError>;

    /// Number of calls that reached the underlying model (not served from a cache).
    fn remote_calls(&self) -> usize {
        0
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn call(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).call(req)
    }

    fn remote_calls(&self) -> usize {
        (**self).remote_calls()
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn call(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).call(req)
    }

    fn remote_calls(&self) -> usize {
        (**self).remote_calls()
    }
}

/// Calls a backend and checks the response echoes the request and carries
/// a result of the requested capability.
pub fn call_backend(endpoint: &dyn Backend, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
    let response = endpoint.call(req)?;
    check_response(req, &response)?;
    Ok(response)
}

pub(crate) fn check_response(req: &BackendRequest, response: &BackendResponse) -> Result<(), BackendError> {
    if response.request_id != req.request_id {
        return Err(BackendError::ProtocolViolation(format!(
            "response echoes request {} but {} was sent",
            response.request_id, req.request_id
        )));
    }
    if response.result.capability() != req.capability() {
        return Err(BackendError::ProtocolViolation(format!(
            "{:?} request answered with a {:?} result",
            req.capability(),
            response.result.capability()
        )));
    }
    Ok(())
}

/// One handle per capability. Capabilities may share a backend.
#[derive(Clone)]
pub struct Backends {
    pub text: Arc<dyn Backend>,
    pub image: Arc<dyn Backend>,
    pub detect: Arc<dyn Backend>,
    pub vqa: Arc<dyn Backend>,
    pub embed: Arc<dyn Backend>,
}

impl Backends {
    pub fn uniform(backend: Arc<dyn Backend>) -> Self {
        Self {
            text: backend.clone(),
            image: backend.clone(),
            detect: backend.clone(),
            vqa: backend.clone(),
            embed: backend,
        }
    }

    pub fn for_capability(&self, capability: Capability) -> &Arc<dyn Backend> {
        match capability {
            Capability::TextGen => &self.text,
            Capability::ImageGen => &self.image,
            Capability::Detect => &self.detect,
            Capability::Vqa => &self.vqa,
            Capability::Embed => &self.embed,
        }
    }
}
