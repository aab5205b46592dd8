//! Request/response types for the five model capabilities.

use serde::{Deserialize, Serialize};

use super::canonical::cache_key;
use crate::validation::Detection;

pub const PROTOCOL_VERSION: &str = "autocomp-backend/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    TextGen,
    ImageGen,
    Detect,
    Vqa,
    Embed,
}

impl Capability {
    pub const ALL: [Capability; 5] =
        [Capability::TextGen, Capability::ImageGen, Capability::Detect, Capability::Vqa, Capability::Embed];

    pub fn endpoint(self) -> &'static str {
        match self {
            Capability::TextGen => "/v1/text",
            Capability::ImageGen => "/v1/image",
            Capability::Detect => "/v1/detect",
            Capability::Vqa => "/v1/vqa",
            Capability::Embed => "/v1/embed",
        }
    }

    /// Directory name used by the response cache.
    pub fn as_str(self) -> &'static str {
        match self {
            Capability::TextGen => "text_gen",
            Capability::ImageGen => "image_gen",
            Capability::Detect => "detect",
            Capability::Vqa => "vqa",
            Capability::Embed => "embed",
        }
    }
}

/// Image bytes travel by reference: a content hash plus a file path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    pub sha256: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextGenPayload {
    pub system: String,
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
    pub seed: u64,
}

impl TextGenPayload {
    pub const DEFAULT_TEMPERATURE: f64 = 0.7;
    pub const DEFAULT_TOP_P: f64 = 0.9;
    pub const DEFAULT_MAX_NEW_TOKENS: u32 = 150;

    pub fn new(system: impl Into<String>, prompt: impl Into<String>, seed: u64) -> Self {
        Self {
            system: system.into(),
            prompt: prompt.into(),
            temperature: Self::DEFAULT_TEMPERATURE,
            top_p: Self::DEFAULT_TOP_P,
            max_new_tokens: Self::DEFAULT_MAX_NEW_TOKENS,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGenPayload {
    pub prompt: String,
    pub width: u32,
    pub height: u32,
    pub steps: u32,
    pub guidance: f64,
    pub seed: u64,
}

impl ImageGenPayload {
    pub const DEFAULT_SIZE: u32 = 1024;
    pub const DEFAULT_STEPS: u32 = 28;
    pub const DEFAULT_GUIDANCE: f64 = 4.5;

    pub fn new(prompt: impl Into<String>, seed: u64) -> Self {
        Self {
            prompt: prompt.into(),
            width: Self::DEFAULT_SIZE,
            height: Self::DEFAULT_SIZE,
            steps: Self::DEFAULT_STEPS,
            guidance: Self::DEFAULT_GUIDANCE,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectPayload {
    pub image: ImageRef,
    pub labels: Vec<String>,
    pub box_threshold: f64,
    pub text_threshold: f64,
}

impl DetectPayload {
    pub const DEFAULT_BOX_THRESHOLD: f64 = 0.4;
    pub const DEFAULT_TEXT_THRESHOLD: f64 = 0.3;

    pub fn new(image: ImageRef, labels: Vec<String>) -> Self {
        Self {
            image,
            labels,
            box_threshold: Self::DEFAULT_BOX_THRESHOLD,
            text_threshold: Self::DEFAULT_TEXT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaPayload {
    pub image: ImageRef,
    pub question: String,
    pub allowed_answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedPayload {
    pub texts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "capability", content = "payload", rename_all = "snake_case")]
pub enum Payload {
    TextGen(TextGenPayload),
    ImageGen(ImageGenPayload),
    Detect(DetectPayload),
    Vqa(VqaPayload),
    Embed(EmbedPayload),
}

impl Payload {
    pub fn capability(&self) -> Capability {
        match self {
            Payload::TextGen(_) => Capability::TextGen,
            Payload::ImageGen(_) => Capability::ImageGen,
            Payload::Detect(_) => Capability::Detect,
            Payload::Vqa(_) => Capability::Vqa,
            Payload::Embed(_) => Capability::Embed,
        }
    }

    /// Images the payload refers to.
    pub fn images(&self) -> Vec<&ImageRef> {
        match self {
            Payload::Detect(p) => vec![&p.image],
            Payload::Vqa(p) => vec![&p.image],
            Payload::Embed(p) => p.image.iter().collect(),
            _ => Vec::new(),
        }
    }
}

/// A request as carried on the wire. `request_id` is the content hash of
/// the canonical payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub protocol_version: String,
    pub request_id: String,
    #[serde(flatten)]
    pub payload: Payload,
}

impl BackendRequest {
    pub fn new(payload: Payload) -> Self {
        let request_id = cache_key(&payload);
        Self { protocol_version: PROTOCOL_VERSION.to_string(), request_id, payload }
    }

    pub fn capability(&self) -> Capability {
        self.payload.capability()
    }

    /// Canonical payload JSON, the text mock matchers search in.
    pub fn payload_json(&self) -> String {
        serde_json::to_string(&self.payload).expect("payload serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendResult {
    Text { text: String },
    Image { image: ImageRef },
    Detections { detections: Vec<Detection> },
    Answer { answer: String },
    Vectors {
        text_vectors: Vec<Vec<f32>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        image_vector: Option<Vec<f32>>,
    },
}

impl BackendResult {
    pub fn capability(&self) -> Capability {
        match self {
            BackendResult::Text { .. } => Capability::TextGen,
            BackendResult::Image { .. } => Capability::ImageGen,
            BackendResult::Detections { .. } => Capability::Detect,
            BackendResult::Answer { .. } => Capability::Vqa,
            BackendResult::Vectors { .. } => Capability::Embed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub request_id: String,
    pub model_id: String,
    pub latency_ms: u64,
    pub result: BackendResult,
}

impl BackendResponse {
    pub fn text(&self) -> Option<&str> {
        match &self.result {
            BackendResult::Text { text } => Some(text),
            _ => None,
        }
    }
}

/// Structured error body returned by remote backends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}
