//! Swap and Confusion hard negatives, error taxonomy and chance baselines.
//!
//! An [`Arrangement`] assigns concept elements to caption slots by index.
//! Color concepts have N object slots and N color slots; position concepts
//! have N object slots and N-1 relation slots. Swap negatives permute one
//! side (colors for color concepts, objects for position concepts); Confusion
//! negatives range over every tuple with replacement on both sides.

use std::collections::{BTreeSet, HashSet};

use num_bigint::BigUint;
use num_traits::{One, Pow};
use serde::{Deserialize, Serialize};

use crate::caption::{render_arrangement, substitute_spans, CaptionError, CaptionRecord};
use crate::combinatorics::{cartesian_power, has_repeats, permutations};
use crate::concept::{Concept, ConceptId, TaskKind, Track};
use crate::numeric::Probability;
use crate::vocab::{ObjectEntry, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Positive,
    Swap,
    Confusion,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Positive => "positive",
            Scheme::Swap => "swap",
            Scheme::Confusion => "confusion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NegativesError {
    #[error("hard negatives need at least two objects, concept has {0}")]
    ArityTooSmall(usize),
    #[error("arrangement does not fit the concept: {0}")]
    ArityMismatch(String),
    #[error("error taxonomy applies only to non-positive color arrangements")]
    NotApplicable,
    #[error(transparent)]
    Caption(#[from] CaptionError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Arrangement {
    pub object_tuple: Vec<usize>,
    pub attribute_tuple: Vec<usize>,
    pub scheme: Scheme,
}

impl Arrangement {
    pub fn identity(concept: &Concept) -> Self {
        Self {
            object_tuple: (0..concept.n).collect(),
            attribute_tuple: (0..concept.task.arity(concept.n)).collect(),
            scheme: Scheme::Positive,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.object_tuple.iter().enumerate().all(|(i, &o)| i == o)
            && self.attribute_tuple.iter().enumerate().all(|(i, &a)| i == a)
    }

    pub fn check(&self, concept: &Concept) -> Result<(), NegativesError> {
        let arity = concept.task.arity(concept.n);
        let fits = self.object_tuple.len() == concept.n
            && self.attribute_tuple.len() == arity
            && self.object_tuple.iter().all(|&i| i < concept.n)
            && self.attribute_tuple.iter().all(|&i| i < arity);
        if fits {
            Ok(())
        } else {
            Err(NegativesError::ArityMismatch(format!(
                "objects {:?} / attributes {:?} for n={}",
                self.object_tuple, self.attribute_tuple, concept.n
            )))
        }
    }

    /// Sorted multiset of bindings: (object, color) per slot, or
    /// (object, relation, object) per chained pair.
    pub fn binding_multiset(&self, task: TaskKind) -> Vec<Vec<usize>> {
        let mut bindings: Vec<Vec<usize>> = match task {
            TaskKind::ColorBinding => self
                .object_tuple
                .iter()
                .zip(&self.attribute_tuple)
                .map(|(&o, &a)| vec![o, a])
                .collect(),
            TaskKind::PositionBinding => self
                .attribute_tuple
                .iter()
                .enumerate()
                .map(|(i, &r)| vec![self.object_tuple[i], r, self.object_tuple[i + 1]])
                .collect(),
        };
        bindings.sort();
        bindings
    }

    /// Same bindings as `other`, possibly in a different slot order.
    pub fn is_binding_equivalent(&self, other: &Arrangement, task: TaskKind) -> bool {
        self.binding_multiset(task) == other.binding_multiset(task)
    }
}

/// A concept's elements resolved through an arrangement: what a caption
/// for that arrangement must mention, slot by slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BindingTarget {
    pub task: TaskKind,
    pub objects: Vec<ObjectEntry>,
    pub attributes: Vec<String>,
    /// Tokens of every element of the source concept; never accepted as modifiers.
    pub reserved: BTreeSet<String>,
    /// Every known object name, as lowercase tokens. An object only matches
    /// where no longer known name does.
    pub object_names: BTreeSet<Vec<String>>,
}

fn name_tokens(name: &str) -> Vec<String> {
    name.split_whitespace().map(str::to_lowercase).collect()
}

impl BindingTarget {
    pub fn from_concept(concept: &Concept) -> Self {
        Self::resolve(concept, &Arrangement::identity(concept))
    }

    pub fn from_arrangement(concept: &Concept, arrangement: &Arrangement) -> Result<Self, NegativesError> {
        arrangement.check(concept)?;
        Ok(Self::resolve(concept, arrangement))
    }

    fn resolve(concept: &Concept, arrangement: &Arrangement) -> Self {
        let attrs = concept.attributes();
        let mut reserved = BTreeSet::new();
        let mut object_names = BTreeSet::new();
        for o in &concept.objects {
            object_names.insert(name_tokens(&o.name));
            object_names.insert(name_tokens(&o.plural));
            reserved.extend(o.name.split_whitespace().map(str::to_string));
            reserved.extend(o.plural.split_whitespace().map(str::to_string));
        }
        for a in attrs {
            reserved.extend(a.split_whitespace().map(str::to_string));
        }
        for article in crate::vocab::ARTICLES {
            reserved.remove(article);
        }
        Self {
            task: concept.task,
            objects: arrangement.object_tuple.iter().map(|&i| concept.objects[i].clone()).collect(),
            attributes: arrangement.attribute_tuple.iter().map(|&i| attrs[i].clone()).collect(),
            reserved,
            object_names,
        }
    }

    /// Also reserve every object, color and relation token of `vocab`.
    pub fn with_vocabulary(mut self, vocab: &Vocabulary) -> Self {
        for o in &vocab.objects {
            self.object_names.insert(name_tokens(&o.name));
            self.object_names.insert(name_tokens(&o.plural));
        }
        let phrases = vocab
            .objects
            .iter()
            .flat_map(|o| [o.name.as_str(), o.plural.as_str()])
            .chain(vocab.colors.iter().map(|c| c.name.as_str()))
            .chain(vocab.relations.iter().map(|r| r.name.as_str()));
        for phrase in phrases {
            self.reserved.extend(phrase.split_whitespace().map(str::to_string));
        }
        for article in crate::vocab::ARTICLES {
            self.reserved.remove(article);
        }
        self
    }

    pub fn binding_count(&self) -> usize {
        match self.task {
            TaskKind::ColorBinding => self.objects.len(),
            TaskKind::PositionBinding => self.objects.len().saturating_sub(1),
        }
    }
}

fn require_pair(concept: &Concept) -> Result<(), NegativesError> {
    if concept.n < 2 {
        Err(NegativesError::ArityTooSmall(concept.n))
    } else {
        Ok(())
    }
}

/// The N!-1 non-identity permutations.
pub fn swap_arrangements(concept: &Concept) -> Result<Vec<Arrangement>, NegativesError> {
    require_pair(concept)?;
    let identity = Arrangement::identity(concept);
    let out = match concept.task {
        TaskKind::ColorBinding => permutations(concept.n)
            .skip(1)
            .map(|perm| Arrangement {
                object_tuple: identity.object_tuple.clone(),
                attribute_tuple: perm,
                scheme: Scheme::Swap,
            })
            .collect(),
        TaskKind::PositionBinding => permutations(concept.n)
            .skip(1)
            .map(|perm| Arrangement {
                object_tuple: perm,
                attribute_tuple: identity.attribute_tuple.clone(),
                scheme: Scheme::Swap,
            })
            .collect(),
    };
    Ok(out)
}

/// Every object tuple crossed with every attribute tuple (with
/// replacement), minus the positive. With `include_binding_equivalents`
/// false, reorderings of the positive's bindings are dropped as well.
pub fn confusion_arrangements(
    concept: &Concept,
    include_binding_equivalents: bool,
) -> Result<Vec<Arrangement>, NegativesError> {
    require_pair(concept)?;
    let arity = concept.task.arity(concept.n);
    let positive = Arrangement::identity(concept);
    let attribute_tuples: Vec<Vec<usize>> = cartesian_power(arity, arity).collect();
    let mut out = Vec::new();
    for objects in cartesian_power(concept.n, concept.n) {
        for attributes in &attribute_tuples {
            let candidate = Arrangement {
                object_tuple: objects.clone(),
                attribute_tuple: attributes.clone(),
                scheme: Scheme::Confusion,
            };
            if candidate.is_identity() {
                continue;
            }
            if !include_binding_equivalents && candidate.is_binding_equivalent(&positive, concept.task) {
                continue;
            }
            out.push(candidate);
        }
    }
    Ok(out)
}

pub fn arrangements(
    concept: &Concept,
    scheme: Scheme,
    include_binding_equivalents: bool,
) -> Result<Vec<Arrangement>, NegativesError> {
    match scheme {
        Scheme::Positive => Ok(vec![Arrangement::identity(concept)]),
        Scheme::Swap => swap_arrangements(concept),
        Scheme::Confusion => confusion_arrangements(concept, include_binding_equivalents),
    }
}

/// Closed-form negative count: N!-1 for Swap, N^(2N)-1 for color
/// Confusion and N^N (N-1)^(N-1) - 1 for position Confusion.
pub fn negative_count(task: TaskKind, n: usize, scheme: Scheme) -> Result<BigUint, NegativesError> {
    if n < 2 {
        return Err(NegativesError::ArityTooSmall(n));
    }
    let big = |v: usize| BigUint::from(v);
    let total = match (scheme, task) {
        (Scheme::Positive, _) => return Ok(BigUint::from(0u32)),
        (Scheme::Swap, _) => (1..=n).fold(BigUint::one(), |acc, k| acc * big(k)),
        (Scheme::Confusion, TaskKind::ColorBinding) => Pow::pow(big(n), 2 * n),
        (Scheme::Confusion, TaskKind::PositionBinding) => Pow::pow(big(n), n) * Pow::pow(big(n - 1), n - 1),
    };
    Ok(total - BigUint::one())
}

/// Probability that uniform guessing over positive plus negatives is right.
pub fn chance_baseline(task: TaskKind, n: usize, scheme: Scheme) -> Result<Probability, NegativesError> {
    let candidates = negative_count(task, n, scheme)? + BigUint::one();
    Ok(Probability::new(BigUint::one(), candidates))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    SwappedColors,
    SameColorDiffObj,
    SameColorSameObj,
    SameObjDiffColors,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 4] = [
        ErrorCategory::SwappedColors,
        ErrorCategory::SameColorDiffObj,
        ErrorCategory::SameColorSameObj,
        ErrorCategory::SameObjDiffColors,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ErrorCategory::SwappedColors => "Swapped Colors",
            ErrorCategory::SameColorDiffObj => "Same Color Diff. Obj.",
            ErrorCategory::SameColorSameObj => "Same Color Same Obj.",
            ErrorCategory::SameObjDiffColors => "Same Obj. Diff. Colors",
        }
    }
}

/// Buckets a non-positive color arrangement by where repeats occur.
pub fn classify_error(arrangement: &Arrangement, concept: &Concept) -> Result<ErrorCategory, NegativesError> {
    arrangement.check(concept)?;
    error_category(concept.task, arrangement)
}

/// [`classify_error`] without the concept, for stored arrangements.
pub fn error_category(task: TaskKind, arrangement: &Arrangement) -> Result<ErrorCategory, NegativesError> {
    if task != TaskKind::ColorBinding || arrangement.is_identity() {
        return Err(NegativesError::NotApplicable);
    }
    let repeated_objects = has_repeats(&arrangement.object_tuple);
    let repeated_colors = has_repeats(&arrangement.attribute_tuple);
    Ok(match (repeated_objects, repeated_colors) {
        (true, true) => ErrorCategory::SameColorSameObj,
        (false, true) => ErrorCategory::SameColorDiffObj,
        (true, false) => ErrorCategory::SameObjDiffColors,
        (false, false) => ErrorCategory::SwappedColors,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeVariant {
    #[serde(flatten)]
    pub arrangement: Arrangement,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeSet {
    pub concept_id: ConceptId,
    pub track: Track,
    pub scheme: Scheme,
    pub includes_binding_equivalents: bool,
    pub variants: Vec<NegativeVariant>,
}

/// Minimal captions re-render through the template; Contextual captions
/// substitute the recorded spans of the positive.
pub fn render_negative(
    record: &CaptionRecord,
    concept: &Concept,
    arrangement: &Arrangement,
) -> Result<String, NegativesError> {
    arrangement.check(concept)?;
    match record.track {
        Track::Minimal => Ok(render_arrangement(concept, arrangement)),
        Track::Contextual => Ok(substitute_spans(record, concept, arrangement)?),
    }
}

/// Renders every arrangement of `scheme`, dropping textual duplicates and
/// any caption identical to the positive.
pub fn build_negative_set(
    record: &CaptionRecord,
    concept: &Concept,
    scheme: Scheme,
    include_binding_equivalents: bool,
) -> Result<NegativeSet, NegativesError> {
    let mut seen: HashSet<String> = HashSet::from([record.text.clone()]);
    let mut variants = Vec::new();
    for arrangement in arrangements(concept, scheme, include_binding_equivalents)? {
        let caption = render_negative(record, concept, &arrangement)?;
        if seen.insert(caption.clone()) {
            variants.push(NegativeVariant { arrangement, caption });
        }
    }
    Ok(NegativeSet {
        concept_id: concept.id.clone(),
        track: record.track,
        scheme,
        includes_binding_equivalents: include_binding_equivalents,
        variants,
    })
}
