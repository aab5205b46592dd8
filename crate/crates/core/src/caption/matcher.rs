use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::concept::{Concept, TaskKind};
use crate::negatives::BindingTarget;
use crate::text::words;
use crate::vocab::{ObjectEntry, Vocabulary, ARTICLES};

use super::{BindingMatch, CaptionError, MatchFailure, MatchResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Filler tokens allowed between a first object and its relation.
    pub relation_gap: usize,
}

impl MatchConfig {
    pub const MAX_RELATION_GAP: usize = 2;

    pub fn new(relation_gap: usize) -> Result<Self, CaptionError> {
        if relation_gap > Self::MAX_RELATION_GAP {
            return Err(CaptionError::InvalidRelationGap(relation_gap));
        }
        Ok(Self { relation_gap })
    }
}

/// Checks against a concept. Modifiers exclude the concept's own tokens
/// and, when given, every vocabulary token.
pub fn check_concept(text: &str, concept: &Concept, vocab: Option<&Vocabulary>, cfg: MatchConfig) -> MatchResult {
    let mut target = BindingTarget::from_concept(concept);
    if let Some(vocab) = vocab {
        target = target.with_vocabulary(vocab);
    }
    check_semantic_preservation(text, &target, cfg)
}

/// Looks for every binding of `target` in `text`, each on its own mention.
pub fn check_semantic_preservation(text: &str, target: &BindingTarget, cfg: MatchConfig) -> MatchResult {
    let tokens = words(text);
    if tokens.is_empty() {
        return failed(MatchFailure::EmptyText);
    }
    let scanner = Scanner { tokens: &tokens, reserved: &target.reserved, names: &target.object_names };
    let candidates: Vec<Vec<BindingMatch>> = (0..target.binding_count())
        .map(|i| match target.task {
            TaskKind::ColorBinding => scanner.color(i, &target.objects[i], &target.attributes[i]),
            TaskKind::PositionBinding => {
                scanner.position(i, &target.objects[i], &target.attributes[i], &target.objects[i + 1], cfg.relation_gap)
            }
        })
        .collect();
    if let Some(index) = candidates.iter().position(Vec::is_empty) {
        return failed(MatchFailure::MissingBinding { index });
    }
    let keys: Vec<Vec<usize>> = candidates.iter().map(|cs| cs.iter().map(mention_key).collect()).collect();
    let assignment = assign(&keys);
    let assigned = assignment.iter().filter(|a| a.is_some()).count();
    if assigned < candidates.len() {
        return failed(MatchFailure::SharedMention { assigned, required: candidates.len() });
    }
    let bindings = assignment
        .into_iter()
        .zip(candidates)
        .map(|(slot, cs)| cs[slot.expect("all assigned")].clone())
        .collect();
    MatchResult { passed: true, bindings, failure_reason: None }
}

fn failed(reason: MatchFailure) -> MatchResult {
    MatchResult { passed: false, bindings: Vec::new(), failure_reason: Some(reason) }
}

// Color mentions are identified by the color token, relations by the relation.
fn mention_key(m: &BindingMatch) -> usize {
    m.attribute_span.as_ref().or(m.relation_span.as_ref()).map(|s| s.start).unwrap_or(m.object_span.start)
}

/// Kuhn's augmenting-path matching of bindings to distinct mentions.
/// Returns, per binding, the index of its chosen candidate.
fn assign(keys: &[Vec<usize>]) -> Vec<Option<usize>> {
    fn augment(
        b: usize,
        keys: &[Vec<usize>],
        owner: &mut std::collections::HashMap<usize, (usize, usize)>,
        seen: &mut BTreeSet<usize>,
    ) -> bool {
        for (ci, &key) in keys[b].iter().enumerate() {
            if !seen.insert(key) {
                continue;
            }
            let free = match owner.get(&key).copied() {
                None => true,
                Some((other, _)) => augment(other, keys, owner, seen),
            };
            if free {
                owner.insert(key, (b, ci));
                return true;
            }
        }
        false
    }
    let mut owner = std::collections::HashMap::new();
    for b in 0..keys.len() {
        augment(b, keys, &mut owner, &mut BTreeSet::new());
    }
    let mut out = vec![None; keys.len()];
    for (b, ci) in owner.into_values() {
        out[b] = Some(ci);
    }
    out
}

struct Scanner<'a> {
    tokens: &'a [String],
    reserved: &'a BTreeSet<String>,
    names: &'a BTreeSet<Vec<String>>,
}

fn is_article(token: &str) -> bool {
    ARTICLES.contains(&token)
}

fn split(phrase: &str) -> Vec<String> {
    phrase.split_whitespace().map(str::to_lowercase).collect()
}

impl Scanner<'_> {
    fn seq_at(&self, at: usize, seq: &[String]) -> bool {
        at + seq.len() <= self.tokens.len() && self.tokens[at..at + seq.len()] == *seq
    }

    /// Token lengths of the forms of `object` present at `at`.
    fn object_at(&self, at: usize, object: &ObjectEntry) -> Vec<usize> {
        let mut forms = vec![split(&object.name)];
        if object.is_plural() {
            forms.push(split(&object.plural));
        }
        let longest = self.names.iter().filter(|n| self.seq_at(at, n)).map(Vec::len).max().unwrap_or(0);
        let mut lens: Vec<usize> =
            forms.iter().filter(|f| self.seq_at(at, f)).map(Vec::len).filter(|&l| l >= longest).collect();
        lens.dedup();
        lens
    }

    fn is_modifier(&self, token: &str) -> bool {
        !is_article(token) && !self.reserved.contains(token)
    }

    /// `Article [Word]` ending right before `start`. Pairs may go without.
    fn determiner_before(&self, start: usize, plural: bool) -> Option<(Option<Range<usize>>, Option<Range<usize>>)> {
        if start >= 1 && is_article(&self.tokens[start - 1]) {
            return Some((Some(start - 1..start), None));
        }
        if start >= 2 && is_article(&self.tokens[start - 2]) && self.is_modifier(&self.tokens[start - 1]) {
            return Some((Some(start - 2..start - 1), Some(start - 1..start)));
        }
        plural.then_some((None, None))
    }

    /// `Article [Word] object` starting at `at`: (article, modifier, object).
    fn noun_phrase_at(&self, at: usize, object: &ObjectEntry) -> Vec<(Option<Range<usize>>, Option<Range<usize>>, Range<usize>)> {
        let mut out = Vec::new();
        if at < self.tokens.len() && is_article(&self.tokens[at]) {
            for len in self.object_at(at + 1, object) {
                out.push((Some(at..at + 1), None, at + 1..at + 1 + len));
            }
            if at + 1 < self.tokens.len() && self.is_modifier(&self.tokens[at + 1]) {
                for len in self.object_at(at + 2, object) {
                    out.push((Some(at..at + 1), Some(at + 1..at + 2), at + 2..at + 2 + len));
                }
            }
        } else if object.is_plural() {
            for len in self.object_at(at, object) {
                out.push((None, None, at..at + len));
            }
        }
        out
    }

    fn color(&self, index: usize, object: &ObjectEntry, color: &str) -> Vec<BindingMatch> {
        let color = split(color);
        let mut out = Vec::new();
        for p in 0..self.tokens.len() {
            if !self.seq_at(p, &color) {
                continue;
            }
            let object_start = p + color.len();
            let Some((article, modifier)) = self.determiner_before(p, object.is_plural()) else {
                continue;
            };
            for len in self.object_at(object_start, object) {
                out.push(BindingMatch {
                    binding_index: index,
                    article_span: article.clone(),
                    modifier_span: modifier.clone(),
                    attribute_span: Some(p..object_start),
                    object_span: object_start..object_start + len,
                    relation_span: None,
                    second_article_span: None,
                    second_modifier_span: None,
                    second_object_span: None,
                });
            }
        }
        out
    }

    fn position(
        &self,
        index: usize,
        first: &ObjectEntry,
        relation: &str,
        second: &ObjectEntry,
        gap: usize,
    ) -> Vec<BindingMatch> {
        let relation = split(relation);
        let mut out = Vec::new();
        for q in 0..self.tokens.len() {
            let Some((article, modifier)) = self.determiner_before(q, first.is_plural()) else {
                continue;
            };
            for len in self.object_at(q, first) {
                let object_end = q + len;
                for filler in 0..=gap {
                    let r = object_end + filler;
                    let fillers_ok = (object_end..r)
                        .all(|k| k < self.tokens.len() && self.is_modifier(&self.tokens[k]));
                    if !fillers_ok || !self.seq_at(r, &relation) {
                        continue;
                    }
                    let relation_end = r + relation.len();
                    for (second_article, second_modifier, second_object) in self.noun_phrase_at(relation_end, second) {
                        out.push(BindingMatch {
                            binding_index: index,
                            article_span: article.clone(),
                            modifier_span: modifier.clone(),
                            attribute_span: None,
                            object_span: q..object_end,
                            relation_span: Some(r..relation_end),
                            second_article_span: second_article,
                            second_modifier_span: second_modifier,
                            second_object_span: Some(second_object),
                        });
                    }
                }
            }
        }
        out
    }
}
