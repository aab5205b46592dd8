//! Deterministic scripted backend.
//!
//! A script is a JSON document:
//!
//! ```json
//! {
//!   "mode": "keyed",
//!   "model_id": "mock-v1",
//!   "fixtures": [
//!     {"capability": "vqa", "contains": ["What color is the cube?"], "response": {"answer": "red"}},
//!     {"capability": "image_gen", "response": {"raster": {"width": 64, "height": 64, "fill": [255, 255, 255]}}},
//!     {"capability": "text_gen", "error": {"code": "BackendUnavailable", "message": "down"}}
//!   ]
//! }
//! ```
//!
//! In `ordered` mode fixtures are consumed front to back and each must match
//! the incoming request. In `keyed` mode the first matching fixture answers
//! and fixtures are reusable. A request nothing matches is a `MockMiss`.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::blob::BlobStore;
use super::protocol::{BackendRequest, BackendResponse, BackendResult, Capability, ErrorBody, ImageRef, Payload};
use super::{Backend, BackendError};
use crate::raster::{encode_png, RasterSpec};
use crate::validation::{BBox, Detection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockMode {
    Ordered,
    #[default]
    Keyed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoLabels {
    #[serde(default = "default_score")]
    pub score: f64,
    /// Per-label instance counts; labels not listed get one detection.
    #[serde(default)]
    pub counts: std::collections::BTreeMap<String, u32>,
    /// Extra labels to report beyond those requested.
    #[serde(default)]
    pub extra: Vec<String>,
}

fn default_score() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FixtureResponse {
    Text { text: String },
    Raster { raster: RasterSpec },
    Image { image: ImageRef },
    Detections { detections: Vec<Detection> },
    EchoLabels { echo_labels: EchoLabels },
    Answer { answer: String },
    Vectors {
        text_vectors: Vec<Vec<f32>>,
        #[serde(default)]
        image_vector: Option<Vec<f32>>,
    },
}

impl FixtureResponse {
    fn capability(&self) -> Capability {
        match self {
            FixtureResponse::Text { .. } => Capability::TextGen,
            FixtureResponse::Raster { .. } | FixtureResponse::Image { .. } => Capability::ImageGen,
            FixtureResponse::Detections { .. } | FixtureResponse::EchoLabels { .. } => Capability::Detect,
            FixtureResponse::Answer { .. } => Capability::Vqa,
            FixtureResponse::Vectors { .. } => Capability::Embed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub capability: Capability,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
    /// Substrings that must all occur in the canonical payload JSON.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<FixtureResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl Fixture {
    fn matches(&self, req: &BackendRequest, payload_json: &str) -> bool {
        self.capability == req.capability()
            && self.request_id.as_ref().is_none_or(|id| *id == req.request_id)
            && self.contains.iter().all(|needle| payload_json.contains(needle.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub mode: MockMode,
    #[serde(default = "default_model_id")]
    pub model_id: String,
    pub fixtures: Vec<Fixture>,
}

fn default_model_id() -> String {
    "mock".to_string()
}

impl MockScript {
    pub fn parse(text: &str) -> Result<Self, BackendError> {
        let script: MockScript =
            serde_json::from_str(text).map_err(|e| BackendError::MalformedScript(e.to_string()))?;
        script.check()?;
        Ok(script)
    }

    fn check(&self) -> Result<(), BackendError> {
        for (i, fixture) in self.fixtures.iter().enumerate() {
            match (&fixture.response, &fixture.error) {
                (Some(response), None) => {
                    if response.capability() != fixture.capability {
                        return Err(BackendError::MalformedScript(format!(
                            "fixture {i}: {:?} response for a {:?} fixture",
                            response.capability(),
                            fixture.capability
                        )));
                    }
                }
                (None, Some(_)) => {}
                _ => {
                    return Err(BackendError::MalformedScript(format!(
                        "fixture {i}: exactly one of `response` or `error` is required"
                    )))
                }
            }
        }
        Ok(())
    }
}

pub struct MockBackend {
    script: MockScript,
    blobs: BlobStore,
    cursor: Mutex<usize>,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(script: MockScript, blob_root: impl Into<std::path::PathBuf>) -> Self {
        Self { script, blobs: BlobStore::new(blob_root), cursor: Mutex::new(0), calls: AtomicUsize::new(0) }
    }

    pub fn from_json(text: &str, blob_root: impl Into<std::path::PathBuf>) -> Result<Self, BackendError> {
        Ok(Self::new(MockScript::parse(text)?, blob_root))
    }

    /// Loads a mock script document from disk.
    pub fn load(path: impl AsRef<Path>, blob_root: impl Into<std::path::PathBuf>) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| BackendError::MalformedScript(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text, blob_root)
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn select(&self, req: &BackendRequest) -> Option<Fixture> {
        let payload_json = req.payload_json();
        match self.script.mode {
            MockMode::Keyed => self.script.fixtures.iter().find(|f| f.matches(req, &payload_json)).cloned(),
            MockMode::Ordered => {
                let mut cursor = self.cursor.lock().unwrap_or_else(|e| e.into_inner());
                let fixture = self.script.fixtures.get(*cursor)?;
                if !fixture.matches(req, &payload_json) {
                    return None;
                }
                *cursor += 1;
                Some(fixture.clone())
            }
        }
    }

    fn materialize(&self, req: &BackendRequest, response: FixtureResponse) -> Result<BackendResult, BackendError> {
        Ok(match response {
            FixtureResponse::Text { text } => BackendResult::Text { text },
            FixtureResponse::Raster { raster } => {
                let png = encode_png(&raster.render()).map_err(|e| BackendError::Io(e.to_string()))?;
                BackendResult::Image { image: self.blobs.put(&png)? }
            }
            FixtureResponse::Image { image } => BackendResult::Image { image },
            FixtureResponse::Detections { detections } => BackendResult::Detections { detections },
            FixtureResponse::EchoLabels { echo_labels } => {
                let labels = match &req.payload {
                    Payload::Detect(p) => p.labels.clone(),
                    _ => Vec::new(),
                };
                BackendResult::Detections { detections: echo_detections(&labels, &echo_labels) }
            }
            FixtureResponse::Answer { answer } => BackendResult::Answer { answer },
            FixtureResponse::Vectors { text_vectors, image_vector } => {
                BackendResult::Vectors { text_vectors, image_vector }
            }
        })
    }
}

/// One detection per requested label (or `counts[label]`), laid out as
/// disjoint vertical strips across the image.
fn echo_detections(labels: &[String], echo: &EchoLabels) -> Vec<Detection> {
    let mut names = Vec::new();
    for label in labels.iter().chain(echo.extra.iter()) {
        let count = echo.counts.get(label).copied().unwrap_or(1);
        names.extend(std::iter::repeat_n(label.clone(), count as usize));
    }
    let total = names.len().max(1) as f64;
    names
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let x0 = i as f64 / total;
            let x1 = (i as f64 + 0.5) / total;
            Detection { label, score: echo.score, bbox: BBox { x0, y0: 0.25, x1, y1: 0.75 }, mask: None }
        })
        .collect()
}

impl Backend for MockBackend {
    fn call(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let fixture = self.select(req).ok_or_else(|| BackendError::MockMiss {
            capability: req.capability(),
            request_id: req.request_id.clone(),
        })?;
        if let Some(error) = fixture.error {
            return Err(match error.code.as_str() {
                "BackendUnavailable" => BackendError::Unavailable(error.message),
                _ => BackendError::Remote { code: error.code, message: error.message },
            });
        }
        let result = self.materialize(req, fixture.response.expect("checked at load"))?;
        Ok(BackendResponse {
            request_id: req.request_id.clone(),
            model_id: self.script.model_id.clone(),
            latency_ms: 0,
            result,
        })
    }

    fn remote_calls(&self) -> usize {
        self.calls()
    }
}
