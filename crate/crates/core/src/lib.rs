//! Concept-driven generation, validation and scoring of compositional
//! vision-language benchmarks.

pub mod backend;
pub mod caption;
pub mod combinatorics;
pub mod concept;
pub mod dataset;
pub mod evaluator;
mod hashing;
pub mod negatives;
pub mod numeric;
pub mod raster;
pub mod text;
pub mod validation;
pub mod vocab;

pub use concept::{Concept, ConceptId, TaskKind, Track};
pub use hashing::{derive_seed, sha256_hex};
pub use numeric::{Decimal, Probability, Rational64, Real};
pub use vocab::Vocabulary;

pub type ScoreMatrix64 = evaluator::ScoreMatrix<f64>;
pub type ScoreMatrix32 = evaluator::ScoreMatrix<f32>;
