//! The structured ground-truth concept and its deterministic sampling.

use std::collections::HashSet;
use std::fmt;

use num_bigint::BigUint;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hashing::short_id;
use crate::vocab::{ObjectEntry, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    ColorBinding,
    PositionBinding,
}

impl TaskKind {
    /// Number of attribute slots for `n` objects.
    pub fn arity(self, n: usize) -> usize {
        match self {
            TaskKind::ColorBinding => n,
            TaskKind::PositionBinding => n.saturating_sub(1),
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            TaskKind::ColorBinding => "color",
            TaskKind::PositionBinding => "position",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_lowercase().as_str() {
            "color" | "color-binding" | "colorbinding" => Some(TaskKind::ColorBinding),
            "position" | "position-binding" | "positionbinding" => Some(TaskKind::PositionBinding),
            _ => None,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// Caption/image track of the paired benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Track {
    Minimal,
    Contextual,
}

impl Track {
    pub const BOTH: [Track; 2] = [Track::Minimal, Track::Contextual];

    pub fn as_str(self) -> &'static str {
        match self {
            Track::Minimal => "minimal",
            Track::Contextual => "contextual",
        }
    }
}

impl fmt::Display for Track {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Stable concept identifier (hex of a truncated SHA-256).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(pub String);

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConceptError {
    #[error("cannot pick {needed} distinct {kind} from a vocabulary of {available}")]
    InsufficientVocabulary { kind: &'static str, needed: usize, available: usize },
    #[error("only {available} distinct concepts exist, {requested} requested")]
    DuplicateExhaustion { requested: usize, available: String },
    #[error("invalid object count {n} for {task}")]
    InvalidArity { task: TaskKind, n: usize },
    #[error("concept invariant violated: {0}")]
    Invariant(String),
}

/// C = (objects, attributes). Color concepts carry one color per object,
/// position concepts one relation per adjacent object pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Concept {
    pub id: ConceptId,
    pub task: TaskKind,
    pub n: usize,
    pub objects: Vec<ObjectEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub colors: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relations: Vec<String>,
}

impl Concept {
    pub fn color(objects: Vec<ObjectEntry>, colors: Vec<String>) -> Result<Self, ConceptError> {
        Self::build(TaskKind::ColorBinding, objects, colors, Vec::new())
    }

    pub fn position(objects: Vec<ObjectEntry>, relations: Vec<String>) -> Result<Self, ConceptError> {
        Self::build(TaskKind::PositionBinding, objects, Vec::new(), relations)
    }

    /// Resolve object names against a vocabulary.
    pub fn from_names(
        vocab: &Vocabulary,
        task: TaskKind,
        objects: &[&str],
        attributes: &[&str],
    ) -> Result<Self, ConceptError> {
        let entries = objects
            .iter()
            .map(|name| {
                vocab
                    .object(name)
                    .cloned()
                    .ok_or_else(|| ConceptError::Invariant(format!("unknown object {name:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let attrs = attributes.iter().map(|a| a.to_string()).collect();
        match task {
            TaskKind::ColorBinding => Self::color(entries, attrs),
            TaskKind::PositionBinding => Self::position(entries, attrs),
        }
    }

    fn build(
        task: TaskKind,
        objects: Vec<ObjectEntry>,
        colors: Vec<String>,
        relations: Vec<String>,
    ) -> Result<Self, ConceptError> {
        let n = objects.len();
        let mut concept = Concept {
            id: ConceptId(String::new()),
            task,
            n,
            objects,
            colors: colors.iter().map(|c| normalize(c)).collect(),
            relations: relations.iter().map(|r| normalize(r)).collect(),
        };
        concept.check()?;
        concept.id = concept_id(&concept);
        Ok(concept)
    }

    /// Checks the structural invariants (not the id).
    pub fn check(&self) -> Result<(), ConceptError> {
        let min_n = match self.task {
            TaskKind::ColorBinding => 1,
            TaskKind::PositionBinding => 2,
        };
        if self.n < min_n || self.objects.len() != self.n {
            return Err(ConceptError::InvalidArity { task: self.task, n: self.n });
        }
        let (expected_colors, expected_relations) = match self.task {
            TaskKind::ColorBinding => (self.n, 0),
            TaskKind::PositionBinding => (0, self.n - 1),
        };
        if self.colors.len() != expected_colors || self.relations.len() != expected_relations {
            return Err(ConceptError::Invariant(format!(
                "{} concept with {} objects needs {} colors and {} relations",
                self.task, self.n, expected_colors, expected_relations
            )));
        }
        if !pairwise_distinct(self.objects.iter().map(|o| o.name.as_str())) {
            return Err(ConceptError::Invariant("objects are not pairwise distinct".into()));
        }
        if !pairwise_distinct(self.colors.iter().map(String::as_str)) {
            return Err(ConceptError::Invariant("colors are not pairwise distinct".into()));
        }
        if !pairwise_distinct(self.relations.iter().map(String::as_str)) {
            return Err(ConceptError::Invariant("relations are not pairwise distinct".into()));
        }
        Ok(())
    }

    /// Colors for color concepts, relations for position concepts.
    pub fn attributes(&self) -> &[String] {
        match self.task {
            TaskKind::ColorBinding => &self.colors,
            TaskKind::PositionBinding => &self.relations,
        }
    }

    pub fn object_names(&self) -> Vec<&str> {
        self.objects.iter().map(|o| o.name.as_str()).collect()
    }

    /// True when the stored id matches the content.
    pub fn id_is_consistent(&self) -> bool {
        concept_id(self) == self.id
    }
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn pairwise_distinct<'a>(items: impl Iterator<Item = &'a str>) -> bool {
    let mut seen = HashSet::new();
    items.into_iter().all(|item| seen.insert(item))
}

/// Canonical hash of (task, objects, attributes). Ignores the stored id.
pub fn concept_id(concept: &Concept) -> ConceptId {
    #[derive(Serialize)]
    struct Preimage<'a> {
        task: TaskKind,
        objects: Vec<(String, String, &'a crate::vocab::GrammaticalNumber, u32)>,
        colors: Vec<String>,
        relations: Vec<String>,
    }
    let preimage = Preimage {
        task: concept.task,
        objects: concept
            .objects
            .iter()
            .map(|o| (normalize(&o.name), normalize(&o.plural), &o.number, o.expected_count))
            .collect(),
        colors: concept.colors.iter().map(|c| normalize(c)).collect(),
        relations: concept.relations.iter().map(|r| normalize(r)).collect(),
    };
    let bytes = serde_json::to_vec(&preimage).expect("serializable");
    ConceptId(short_id(&bytes))
}

/// Number of distinct concepts (ordered picks) a vocabulary admits.
pub fn concept_space_size(vocab: &Vocabulary, task: TaskKind, n: usize) -> BigUint {
    let attrs = match task {
        TaskKind::ColorBinding => vocab.colors.len(),
        TaskKind::PositionBinding => vocab.relations.len(),
    };
    falling_factorial(vocab.objects.len(), n) * falling_factorial(attrs, task.arity(n))
}

fn falling_factorial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    (0..k).fold(BigUint::from(1u32), |acc, i| acc * BigUint::from(n - i))
}

/// Draws `count` pairwise-distinct concepts, reproducibly from `seed`.
pub fn sample_concepts(
    vocab: &Vocabulary,
    task: TaskKind,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Concept>, ConceptError> {
    let min_n = if task == TaskKind::PositionBinding { 2 } else { 1 };
    if n < min_n {
        return Err(ConceptError::InvalidArity { task, n });
    }
    if n > vocab.objects.len() {
        return Err(ConceptError::InsufficientVocabulary {
            kind: "objects",
            needed: n,
            available: vocab.objects.len(),
        });
    }
    let (attr_kind, attr_pool) = match task {
        TaskKind::ColorBinding => ("colors", vocab.color_names()),
        TaskKind::PositionBinding => ("relations", vocab.relation_names()),
    };
    let arity = task.arity(n);
    if arity > attr_pool.len() {
        return Err(ConceptError::InsufficientVocabulary {
            kind: attr_kind,
            needed: arity,
            available: attr_pool.len(),
        });
    }
    let space = concept_space_size(vocab, task, n);
    if BigUint::from(count) > space {
        return Err(ConceptError::DuplicateExhaustion { requested: count, available: space.to_string() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let make = |object_idx: &[usize], attr_idx: &[usize]| -> Concept {
        let objects = object_idx.iter().map(|&i| vocab.objects[i].clone()).collect();
        let attrs = attr_idx.iter().map(|&i| attr_pool[i].clone()).collect();
        let built = match task {
            TaskKind::ColorBinding => Concept::color(objects, attrs),
            TaskKind::PositionBinding => Concept::position(objects, attrs),
        };
        built.expect("sampled picks satisfy invariants")
    };

    // Dense requests enumerate the whole space; sparse ones use rejection.
    if BigUint::from(count) * BigUint::from(2u32) > space {
        let mut all = Vec::new();
        for objects in ordered_picks(vocab.objects.len(), n) {
            for attrs in ordered_picks(attr_pool.len(), arity) {
                all.push(make(&objects, &attrs));
            }
        }
        let (chosen, _) = all.partial_shuffle(&mut rng, count);
        return Ok(chosen.to_vec());
    }

    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let objects = index::sample(&mut rng, vocab.objects.len(), n).into_vec();
        let attrs = index::sample(&mut rng, attr_pool.len(), arity).into_vec();
        let concept = make(&objects, &attrs);
        if seen.insert(concept.id.clone()) {
            out.push(concept);
        }
    }
    Ok(out)
}

/// All ordered selections of `k` distinct indices from `0..n`.
pub fn ordered_picks(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, current: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                current.push(i);
                rec(n, k, current, used, out);
                current.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(n, k, &mut Vec::with_capacity(k), &mut vec![false; n], &mut out);
    }
    out
}
