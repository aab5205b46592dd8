//! Object, color and relation vocabularies.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::hashing::sha256_hex;

pub const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// The default 250-object / 20-color / 4-relation vocabulary.
pub const DEFAULT_VOCABULARY: &str = include_str!("../assets/default_vocabulary.json");

#[derive(Debug, thiserror::Error)]
pub enum VocabError {
    #[error("vocabulary document is malformed: {0}")]
    Malformed(String),
    #[error("duplicate {kind} entry {name:?}")]
    DuplicateEntry { kind: &'static str, name: String },
    #[error("vocabulary has no {0}")]
    EmptyVocabulary(&'static str),
    #[error("relation {relation:?} has a missing or asymmetric inverse {inverse:?}")]
    MalformedRelationInverse { relation: String, inverse: String },
    #[error("invalid {kind} entry {name:?}: {reason}")]
    InvalidEntry { kind: &'static str, name: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrammaticalNumber {
    Singular,
    InherentlyPlural,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub name: String,
    pub plural: String,
    pub number: GrammaticalNumber,
    pub expected_count: u32,
}

impl ObjectEntry {
    pub fn singular(name: &str, plural: &str) -> Self {
        Self {
            name: name.to_string(),
            plural: plural.to_string(),
            number: GrammaticalNumber::Singular,
            expected_count: 1,
        }
    }

    pub fn pair(name: &str, plural: &str) -> Self {
        Self {
            name: name.to_string(),
            plural: plural.to_string(),
            number: GrammaticalNumber::InherentlyPlural,
            expected_count: 2,
        }
    }

    pub fn is_plural(&self) -> bool {
        self.number == GrammaticalNumber::InherentlyPlural
    }

    /// Form used when rendering a single mention of the object.
    pub fn surface(&self) -> &str {
        if self.is_plural() {
            &self.plural
        } else {
            &self.name
        }
    }

    /// True when `label` names this object (plural form accepted for pairs).
    pub fn matches_label(&self, label: &str) -> bool {
        let label = label.trim().to_lowercase();
        label == self.name || (self.is_plural() && label == self.plural)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColorEntry {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationEntry {
    pub name: String,
    pub inverse: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Vocabulary {
    pub objects: Vec<ObjectEntry>,
    pub colors: Vec<ColorEntry>,
    pub relations: Vec<RelationEntry>,
    pub version: String,
}

// On-disk layout. `colors` may be plain strings or `{name}` records.
#[derive(Deserialize)]
struct VocabularyDoc {
    #[serde(default)]
    objects: Vec<ObjectDoc>,
    #[serde(default)]
    colors: Vec<ColorDoc>,
    #[serde(default)]
    relations: Vec<RelationEntry>,
    #[serde(default)]
    #[allow(dead_code)]
    version: Option<String>,
}

#[derive(Deserialize)]
struct ObjectDoc {
    name: String,
    plural: Option<String>,
    #[serde(default = "default_number")]
    number: GrammaticalNumber,
    expected_count: Option<u32>,
}

fn default_number() -> GrammaticalNumber {
    GrammaticalNumber::Singular
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ColorDoc {
    Name(String),
    Entry(ColorEntry),
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl Vocabulary {
    /// The shipped default vocabulary.
    pub fn default_set() -> Self {
        Self::from_json(DEFAULT_VOCABULARY).expect("bundled vocabulary is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, VocabError> {
        let doc: VocabularyDoc =
            serde_json::from_str(text).map_err(|e| VocabError::Malformed(e.to_string()))?;
        let objects = doc
            .objects
            .into_iter()
            .map(|o| {
                let name = normalize(&o.name);
                let plural = o.plural.as_deref().map(normalize).unwrap_or_else(|| format!("{name}s"));
                let expected_count = o.expected_count.unwrap_or(match o.number {
                    GrammaticalNumber::Singular => 1,
                    GrammaticalNumber::InherentlyPlural => 2,
                });
                ObjectEntry { name, plural, number: o.number, expected_count }
            })
            .collect();
        let colors = doc
            .colors
            .into_iter()
            .map(|c| match c {
                ColorDoc::Name(name) => ColorEntry { name: normalize(&name) },
                ColorDoc::Entry(e) => ColorEntry { name: normalize(&e.name) },
            })
            .collect();
        let relations = doc
            .relations
            .into_iter()
            .map(|r| RelationEntry { name: normalize(&r.name), inverse: normalize(&r.inverse) })
            .collect();
        Self::new(objects, colors, relations)
    }

    /// Validates the entries and computes the content version.
    pub fn new(
        objects: Vec<ObjectEntry>,
        colors: Vec<ColorEntry>,
        relations: Vec<RelationEntry>,
    ) -> Result<Self, VocabError> {
        if objects.is_empty() {
            return Err(VocabError::EmptyVocabulary("objects"));
        }
        if colors.is_empty() && relations.is_empty() {
            return Err(VocabError::EmptyVocabulary("attributes"));
        }

        let mut seen = HashSet::new();
        for o in &objects {
            check_name("object", &o.name, 4)?;
            check_name("object", &o.plural, 4)?;
            let valid_count = match o.number {
                GrammaticalNumber::Singular => o.expected_count == 1,
                GrammaticalNumber::InherentlyPlural => o.expected_count >= 2,
            };
            if !valid_count {
                return Err(VocabError::InvalidEntry {
                    kind: "object",
                    name: o.name.clone(),
                    reason: format!("expected_count {} does not fit {:?}", o.expected_count, o.number),
                });
            }
            if !seen.insert(o.name.as_str()) {
                return Err(VocabError::DuplicateEntry { kind: "object", name: o.name.clone() });
            }
        }

        let mut seen = HashSet::new();
        for c in &colors {
            check_name("color", &c.name, 1)?;
            if !seen.insert(c.name.as_str()) {
                return Err(VocabError::DuplicateEntry { kind: "color", name: c.name.clone() });
            }
        }

        let mut seen = HashSet::new();
        for r in &relations {
            check_name("relation", &r.name, 4)?;
            if !seen.insert(r.name.as_str()) {
                return Err(VocabError::DuplicateEntry { kind: "relation", name: r.name.clone() });
            }
        }
        for r in &relations {
            let symmetric = relations
                .iter()
                .find(|other| other.name == r.inverse)
                .is_some_and(|other| other.inverse == r.name);
            if !symmetric {
                return Err(VocabError::MalformedRelationInverse {
                    relation: r.name.clone(),
                    inverse: r.inverse.clone(),
                });
            }
        }

        let version = content_version(&objects, &colors, &relations);
        Ok(Self { objects, colors, relations, version })
    }

    pub fn object(&self, name: &str) -> Option<&ObjectEntry> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn relation(&self, name: &str) -> Option<&RelationEntry> {
        self.relations.iter().find(|r| r.name == name)
    }

    pub fn color_names(&self) -> Vec<String> {
        self.colors.iter().map(|c| c.name.clone()).collect()
    }

    pub fn relation_names(&self) -> Vec<String> {
        self.relations.iter().map(|r| r.name.clone()).collect()
    }

    /// Serializes back to the document format (version included).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocabulary serializes")
    }
}

fn check_name(kind: &'static str, name: &str, max_tokens: usize) -> Result<(), VocabError> {
    let tokens: Vec<&str> = name.split_whitespace().collect();
    let reason = if tokens.is_empty() {
        Some("empty name".to_string())
    } else if tokens.len() > max_tokens {
        Some(format!("more than {max_tokens} tokens"))
    } else if ARTICLES.contains(&name) {
        Some("collides with an article".to_string())
    } else {
        None
    };
    match reason {
        Some(reason) => Err(VocabError::InvalidEntry { kind, name: name.to_string(), reason }),
        None => Ok(()),
    }
}

fn content_version(objects: &[ObjectEntry], colors: &[ColorEntry], relations: &[RelationEntry]) -> String {
    #[derive(Serialize)]
    struct Content<'a> {
        objects: &'a [ObjectEntry],
        colors: &'a [ColorEntry],
        relations: &'a [RelationEntry],
    }
    let bytes = serde_json::to_vec(&Content { objects, colors, relations }).expect("serializable");
    sha256_hex(&bytes)
}
