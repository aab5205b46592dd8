//! Caption tokenizer shared by the matcher, substitution and n-gram metrics.

use std::ops::Range;

/// One normalized token and the byte range of its core in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub span: Range<usize>,
}

/// Splits on whitespace, strips leading/trailing punctuation from each
/// token and lowercases. Tokens that are pure punctuation are dropped.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices().chain(std::iter::once((text.len(), ' '))) {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                if let Some(tok) = core_token(text, s, i) {
                    out.push(tok);
                }
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    out
}

fn core_token(text: &str, start: usize, end: usize) -> Option<Token> {
    let raw = &text[start..end];
    let lead = raw.len() - raw.trim_start_matches(|c: char| !c.is_alphanumeric()).len();
    let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
    if trimmed.is_empty() {
        return None;
    }
    let s = start + lead;
    Some(Token { text: trimmed.to_lowercase(), span: s..s + trimmed.len() })
}

/// Normalized token strings only.
pub fn words(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text).collect()
}

pub fn starts_with_vowel(word: &str) -> bool {
    word.chars()
        .next()
        .is_some_and(|c| matches!(c.to_ascii_lowercase(), 'a' | 'e' | 'i' | 'o' | 'u'))
}

/// `a` or `an` for the following word.
pub fn indefinite_article(next_word: &str) -> &'static str {
    if starts_with_vowel(next_word) {
        "an"
    } else {
        "a"
    }
}
