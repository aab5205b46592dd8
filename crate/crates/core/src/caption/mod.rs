//! Minimal caption templates, the Contextual LLM prompt, the semantic
//! preservation matcher and span substitution for negatives.

mod contextual;
mod matcher;
mod prompt;
mod render;
mod substitute;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::concept::{ConceptId, Track};

pub use contextual::{clean_llm_output, generate_contextual, ContextualConfig, ContextualError, ContextualOutcome};
pub use matcher::{check_concept, check_semantic_preservation, MatchConfig};
pub use prompt::{build_contextual_prompt, pair_phrases, PromptPair, PromptTemplates};
pub use render::{render_arrangement, render_minimal, MINIMAL_GENERATOR_ID, WHITE_BACKGROUND_SUFFIX};
pub use substitute::substitute_spans;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CaptionError {
    #[error("relation gap {0} exceeds the maximum of 2")]
    InvalidRelationGap(usize),
    #[error("caption spans do not fit the arrangement: {0}")]
    SpanMismatch(String),
    #[error("attempt numbers start at 1")]
    InvalidAttempt,
    #[error("retries must be at least 1")]
    InvalidRetries,
}

/// Where one required binding was found. Spans are half-open token index
/// ranges into the caption's token stream. Color bindings fill
/// `attribute_span`; position bindings fill `relation_span` and the
/// `second_*` spans.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BindingMatch {
    pub binding_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article_span: Option<Range<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modifier_span: Option<Range<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute_span: Option<Range<usize>>,
    pub object_span: Range<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation_span: Option<Range<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_article_span: Option<Range<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_modifier_span: Option<Range<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_object_span: Option<Range<usize>>,
}

impl BindingMatch {
    /// All spans of this binding in left-to-right order.
    pub fn spans(&self) -> Vec<Range<usize>> {
        [
            &self.article_span,
            &self.modifier_span,
            &self.attribute_span,
            &Some(self.object_span.clone()),
            &self.relation_span,
            &self.second_article_span,
            &self.second_modifier_span,
            &self.second_object_span,
        ]
        .into_iter()
        .flatten()
        .cloned()
        .collect()
    }

    /// Spans are non-empty, non-overlapping and ordered; a color sits
    /// directly before its object.
    pub fn is_well_formed(&self) -> bool {
        let spans = self.spans();
        let ordered = spans.iter().all(|s| s.start < s.end) && spans.windows(2).all(|w| w[0].end <= w[1].start);
        let adjacent = self.attribute_span.as_ref().is_none_or(|a| a.end == self.object_span.start);
        ordered && adjacent
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum MatchFailure {
    EmptyText,
    MissingBinding { index: usize },
    /// Every binding has a candidate but they cannot all use distinct mentions.
    SharedMention { assigned: usize, required: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub passed: bool,
    pub bindings: Vec<BindingMatch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<MatchFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub concept_id: ConceptId,
    pub track: Track,
    pub text: String,
    pub tokens: Vec<String>,
    #[serde(rename = "match")]
    pub match_result: MatchResult,
    pub attempts: u32,
    pub generator_id: String,
}
