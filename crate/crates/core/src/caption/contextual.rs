use serde::{Deserialize, Serialize};

use crate::backend::{call_backend, Backend, BackendError, BackendRequest, Payload, TextGenPayload};
use crate::concept::{Concept, ConceptId, Track};
use crate::hashing::derive_seed;
use crate::text::words;
use crate::vocab::Vocabulary;

use super::matcher::{check_concept, MatchConfig};
use super::prompt::{build_contextual_prompt, PromptTemplates};
use super::{CaptionError, CaptionRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualConfig {
    pub retries: u32,
    pub matching: MatchConfig,
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
    pub seed: u64,
}

impl Default for ContextualConfig {
    fn default() -> Self {
        Self {
            retries: 3,
            matching: MatchConfig::default(),
            temperature: TextGenPayload::DEFAULT_TEMPERATURE,
            top_p: TextGenPayload::DEFAULT_TOP_P,
            max_new_tokens: TextGenPayload::DEFAULT_MAX_NEW_TOKENS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ContextualOutcome {
    Record(CaptionRecord),
    Discarded { concept_id: ConceptId, attempts: u32, last_text: Option<String> },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ContextualError {
    #[error(transparent)]
    Caption(#[from] CaptionError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Trims whitespace, a `Caption:` label and surrounding quotes.
pub fn clean_llm_output(raw: &str) -> String {
    let mut text = raw.trim();
    if let Some(rest) = text.strip_prefix("Caption:") {
        text = rest.trim();
    }
    for (open, close) in [('"', '"'), ('\'', '\''), ('“', '”')] {
        if text.len() >= 2 && text.starts_with(open) && text.ends_with(close) {
            text = text[open.len_utf8()..text.len() - close.len_utf8()].trim();
        }
    }
    text.to_string()
}

/// Prompts the LLM until its caption passes the preservation check, using
/// the insistent prompt after the first failure.
pub fn generate_contextual(
    concept: &Concept,
    vocab: &Vocabulary,
    llm: &dyn Backend,
    templates: &PromptTemplates,
    cfg: &ContextualConfig,
) -> Result<ContextualOutcome, ContextualError> {
    if cfg.retries == 0 {
        return Err(CaptionError::InvalidRetries.into());
    }
    let mut last_text = None;
    for attempt in 1..=cfg.retries {
        let prompt = build_contextual_prompt(concept, attempt, templates)?;
        let seed = derive_seed(&[&cfg.seed.to_string(), &concept.id.0, &attempt.to_string()]);
        let mut payload = TextGenPayload::new(prompt.system_text, prompt.user_text, seed);
        payload.temperature = cfg.temperature;
        payload.top_p = cfg.top_p;
        payload.max_new_tokens = cfg.max_new_tokens;
        let response = call_backend(llm, &BackendRequest::new(Payload::TextGen(payload)))?;
        let text = clean_llm_output(response.text().unwrap_or_default());
        let match_result = check_concept(&text, concept, Some(vocab), cfg.matching);
        if match_result.passed {
            return Ok(ContextualOutcome::Record(CaptionRecord {
                concept_id: concept.id.clone(),
                track: Track::Contextual,
                tokens: words(&text),
                text,
                match_result,
                attempts: attempt,
                generator_id: response.model_id,
            }));
        }
        last_text = Some(text);
    }
    Ok(ContextualOutcome::Discarded { concept_id: concept.id.clone(), attempts: cfg.retries, last_text })
}
