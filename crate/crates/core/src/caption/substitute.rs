use std::ops::Range;

use crate::concept::{Concept, TaskKind};
use crate::negatives::Arrangement;
use crate::text::{indefinite_article, tokenize, Token};
use crate::vocab::ObjectEntry;

use super::{BindingMatch, CaptionError, CaptionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Case {
    Keep,
    Upper,
    Lower,
}

fn apply_case(word: &str, case: Case) -> String {
    let mut chars = word.chars();
    match (case, chars.next()) {
        (Case::Keep, _) | (_, None) => word.to_string(),
        (Case::Upper, Some(c)) => c.to_uppercase().chain(chars).collect(),
        (Case::Lower, Some(c)) => c.to_lowercase().chain(chars).collect(),
    }
}

fn starts_upper(word: &str) -> bool {
    word.chars().next().is_some_and(char::is_uppercase)
}

/// `replacement` in the capitalization of `original`; the original bytes
/// when the words agree ignoring case.
fn in_case_of(original: &str, replacement: &str) -> String {
    if original.to_lowercase() == replacement.to_lowercase() {
        original.to_string()
    } else if starts_upper(original) {
        apply_case(replacement, Case::Upper)
    } else {
        replacement.to_string()
    }
}

struct Editor<'a> {
    text: &'a str,
    tokens: Vec<Token>,
    edits: Vec<(Range<usize>, String)>,
}

impl<'a> Editor<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, tokens: tokenize(text), edits: Vec::new() }
    }

    fn bytes(&self, span: &Range<usize>) -> Result<Range<usize>, CaptionError> {
        if span.start >= span.end || span.end > self.tokens.len() {
            return Err(CaptionError::SpanMismatch(format!(
                "token span {span:?} outside a caption of {} tokens",
                self.tokens.len()
            )));
        }
        Ok(self.tokens[span.start].span.start..self.tokens[span.end - 1].span.end)
    }

    fn original(&self, span: &Range<usize>) -> Result<&'a str, CaptionError> {
        let bytes = self.bytes(span)?;
        Ok(&self.text[bytes])
    }

    fn push(&mut self, range: Range<usize>, replacement: String) {
        self.edits.push((range, replacement));
    }

    /// Replaces one span, applying `case` on top of the original's capitalization.
    fn replace(&mut self, span: &Range<usize>, replacement: &str, case: Case) -> Result<(), CaptionError> {
        let original = self.original(span)?;
        let new = apply_case(&in_case_of(original, replacement), case);
        if new != original {
            let bytes = self.bytes(span)?;
            self.push(bytes, new);
        }
        Ok(())
    }

    /// Rewrites one noun phrase `[article] [modifier] (attribute) object`.
    fn noun_phrase(
        &mut self,
        article: Option<&Range<usize>>,
        modifier: Option<&Range<usize>>,
        attribute: Option<(&Range<usize>, &str)>,
        object: (&Range<usize>, &ObjectEntry, &ObjectEntry),
    ) -> Result<(), CaptionError> {
        let (object_span, old_object, new_object) = object;
        let object_changed = old_object.name != new_object.name;
        // Word following the article slot, before and after the edit.
        let (lead_span, lead_new) = match (modifier, attribute) {
            (Some(m), _) => (m.clone(), self.original(m)?.to_lowercase()),
            (None, Some((a, new))) => (a.clone(), new.to_string()),
            (None, None) => (object_span.clone(), new_object.surface().to_string()),
        };
        let lead_old = self.original(&lead_span)?;
        let lead_changed = lead_old.to_lowercase() != lead_new.to_lowercase();
        let mut lead_case = Case::Keep;

        match article {
            Some(a) => {
                let art = self.original(a)?;
                let indefinite = matches!(art.to_lowercase().as_str(), "a" | "an");
                if indefinite && object_changed && new_object.is_plural() {
                    let start = self.bytes(a)?.start;
                    let end = self.bytes(&lead_span)?.start;
                    self.push(start..end, String::new());
                    if starts_upper(art) {
                        lead_case = Case::Upper;
                    }
                } else if indefinite && lead_changed {
                    let fixed = in_case_of(art, indefinite_article(&lead_new));
                    if fixed != art {
                        let bytes = self.bytes(a)?;
                        self.push(bytes, fixed);
                    }
                }
            }
            None if object_changed && !new_object.is_plural() => {
                let at = self.bytes(&lead_span)?.start;
                let mut inserted = format!("{} ", indefinite_article(&lead_new));
                if starts_upper(lead_old) {
                    inserted = apply_case(&inserted, Case::Upper);
                    lead_case = Case::Lower;
                }
                self.push(at..at, inserted);
            }
            None => {}
        }

        let new_surface = if object_changed { new_object.surface() } else { self.original(object_span)? };
        let object_case = if lead_span == *object_span { lead_case } else { Case::Keep };
        self.replace(object_span, new_surface, object_case)?;
        if let Some((span, new)) = attribute {
            let case = if lead_span == *span { lead_case } else { Case::Keep };
            self.replace(span, new, case)?;
        }
        if let Some(m) = modifier {
            if lead_case != Case::Keep {
                let original = self.original(m)?.to_string();
                self.replace(m, &original, lead_case)?;
            }
        }
        Ok(())
    }

    fn finish(mut self) -> Result<String, CaptionError> {
        self.edits.sort_by(|a, b| (a.0.start, a.0.end).cmp(&(b.0.start, b.0.end)));
        self.edits.dedup();
        let mut out = String::with_capacity(self.text.len());
        let mut cursor = 0;
        for (range, replacement) in &self.edits {
            if range.start < cursor {
                return Err(CaptionError::SpanMismatch(format!("conflicting edits at byte {}", range.start)));
            }
            out.push_str(&self.text[cursor..range.start]);
            out.push_str(replacement);
            cursor = range.end;
        }
        out.push_str(&self.text[cursor..]);
        Ok(out)
    }
}

/// Re-renders a caption for another arrangement by editing only the
/// recorded binding spans (and articles whose next word changed).
pub fn substitute_spans(record: &CaptionRecord, concept: &Concept, arrangement: &Arrangement) -> Result<String, CaptionError> {
    let arity = concept.task.arity(concept.n);
    let bindings = &record.match_result.bindings;
    let required = match concept.task {
        TaskKind::ColorBinding => concept.n,
        TaskKind::PositionBinding => concept.n - 1,
    };
    if !record.match_result.passed
        || bindings.len() != required
        || arrangement.object_tuple.len() != concept.n
        || arrangement.attribute_tuple.len() != arity
        || arrangement.object_tuple.iter().any(|&o| o >= concept.n)
        || arrangement.attribute_tuple.iter().any(|&a| a >= arity)
    {
        return Err(CaptionError::SpanMismatch(format!(
            "{} bindings recorded for an arrangement of {} objects / {} attributes",
            bindings.len(),
            arrangement.object_tuple.len(),
            arrangement.attribute_tuple.len()
        )));
    }
    let attributes = concept.attributes();
    let mut editor = Editor::new(&record.text);
    for b in bindings {
        let i = b.binding_index;
        if i >= required {
            return Err(CaptionError::SpanMismatch(format!("binding index {i} out of range")));
        }
        let old_first = &concept.objects[i];
        let new_first = &concept.objects[arrangement.object_tuple[i]];
        let new_attribute = attributes[arrangement.attribute_tuple[i]].as_str();
        match concept.task {
            TaskKind::ColorBinding => {
                let attribute = b.attribute_span.as_ref().ok_or_else(|| missing(b, "attribute"))?;
                editor.noun_phrase(
                    b.article_span.as_ref(),
                    b.modifier_span.as_ref(),
                    Some((attribute, new_attribute)),
                    (&b.object_span, old_first, new_first),
                )?;
            }
            TaskKind::PositionBinding => {
                let relation = b.relation_span.as_ref().ok_or_else(|| missing(b, "relation"))?;
                let second = b.second_object_span.as_ref().ok_or_else(|| missing(b, "second object"))?;
                editor.noun_phrase(
                    b.article_span.as_ref(),
                    b.modifier_span.as_ref(),
                    None,
                    (&b.object_span, old_first, new_first),
                )?;
                editor.replace(relation, new_attribute, Case::Keep)?;
                editor.noun_phrase(
                    b.second_article_span.as_ref(),
                    b.second_modifier_span.as_ref(),
                    None,
                    (second, &concept.objects[i + 1], &concept.objects[arrangement.object_tuple[i + 1]]),
                )?;
            }
        }
    }
    editor.finish()
}

fn missing(b: &BindingMatch, what: &str) -> CaptionError {
    CaptionError::SpanMismatch(format!("binding {} has no {what} span", b.binding_index))
}
