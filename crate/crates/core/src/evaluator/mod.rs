//! Trial scoring, aggregation, chance baselines, the blind caption-choice
//! protocol and caption diversity metrics.

mod blind;
mod chance;
mod diversity;
mod scores;
mod trials;

use serde::{Deserialize, Serialize};

use crate::negatives::Arrangement;
use crate::numeric::Real;

pub use blind::{build_blind_prompt, parse_choice, BlindPrompt, Unparseable};
pub use chance::{simulate_random_chance, ChanceEstimate};
pub use diversity::{distinct_n, semantic_diversity};
pub use scores::{
    aggregate, paired_deltas, percent, CellScore, ErrorHistogram, PairedDelta, RelationScore, ScoreKey, ScoredTrial,
    BenchmarkScores,
};
pub use trials::{
    build_trials, cosine, embed_scores, read_score_file, score_records, write_score_file, ScoreRecord, Trial,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("invalid score matrix: {0}")]
    InvalidMatrix(String),
    #[error("no trials for {0}")]
    EmptyCell(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Candidate scores for one trial. Index 0 is the positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix<T> {
    pub trial_id: String,
    pub candidates: Vec<String>,
    pub scores: Vec<T>,
}

impl<T: Real> ScoreMatrix<T> {
    pub fn new(trial_id: impl Into<String>, candidates: Vec<String>, scores: Vec<T>) -> Result<Self, EvalError> {
        let m = Self { trial_id: trial_id.into(), candidates, scores };
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<(), EvalError> {
        if self.scores.len() < 2 {
            return Err(EvalError::InvalidMatrix(format!("{}: fewer than two candidates", self.trial_id)));
        }
        if self.candidates.len() != self.scores.len() {
            return Err(EvalError::InvalidMatrix(format!(
                "{}: {} candidates but {} scores",
                self.trial_id,
                self.candidates.len(),
                self.scores.len()
            )));
        }
        if self.scores.iter().any(|s| !s.is_finite()) {
            return Err(EvalError::InvalidMatrix(format!("{}: non-finite score", self.trial_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub correct: bool,
    pub chosen_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_arrangement: Option<Arrangement>,
    pub tie: bool,
}

/// Argmax over the candidates. A tie at the maximum is incorrect and
/// reports the first tied negative as the choice.
pub fn score_trial<T: Real>(m: &ScoreMatrix<T>) -> TrialOutcome {
    let best = m.scores.iter().copied().fold(T::neg_infinity(), T::max);
    let tied: Vec<usize> = (0..m.scores.len()).filter(|&i| m.scores[i] == best).collect();
    let tie = tied.len() > 1;
    let chosen_index = if tie { tied.iter().copied().find(|&i| i != 0).unwrap_or(tied[0]) } else { tied[0] };
    TrialOutcome { correct: !tie && chosen_index == 0, chosen_index, chosen_arrangement: None, tie }
}
