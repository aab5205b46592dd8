use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{call_backend, Backend, BackendError, BackendRequest, BackendResult, EmbedPayload, ImageRef, Payload};
use crate::concept::TaskKind;
use crate::dataset::{ImageEntry, ManifestRecord};
use crate::negatives::Arrangement;
use crate::numeric::Real;

use super::{score_trial, EvalError, ScoreKey, ScoreMatrix, ScoredTrial};

/// One retrieval trial: the positive caption (index 0) and one negative set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: String,
    pub key: ScoreKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageEntry>,
    pub candidate_ids: Vec<String>,
    pub candidates: Vec<String>,
    pub arrangements: Vec<Arrangement>,
}

/// Candidate ids: `pos` for the positive, `neg:<i>` for negative `i`.
fn candidate_id(i: usize) -> String {
    if i == 0 {
        "pos".to_string()
    } else {
        format!("neg:{}", i - 1)
    }
}

pub fn build_trials(records: &[&ManifestRecord]) -> Result<Vec<Trial>, EvalError> {
    let mut out = Vec::new();
    for record in records {
        let concept = record.concept().map_err(|e| EvalError::InvalidInput(e.to_string()))?;
        let caption = record
            .caption
            .as_ref()
            .ok_or_else(|| EvalError::InvalidInput(format!("{} has no caption", record.concept_id)))?;
        for set in &record.negatives {
            let mut candidates = vec![caption.text.clone()];
            let mut arrangements = vec![Arrangement::identity(concept)];
            for v in &set.variants {
                candidates.push(v.caption.clone());
                arrangements.push(v.arrangement.clone());
            }
            out.push(Trial {
                trial_id: format!("{}:{}:{}", record.concept_id, record.track, set.scheme.as_str()),
                key: ScoreKey { task: concept.task, n: concept.n, track: record.track, scheme: set.scheme },
                relation: (concept.task == TaskKind::PositionBinding).then(|| concept.relations[0].clone()),
                image: record.image.clone(),
                candidate_ids: (0..candidates.len()).map(candidate_id).collect(),
                candidates,
                arrangements,
            });
        }
    }
    Ok(out)
}

/// One line of a score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub trial_id: String,
    pub candidate_ids: Vec<String>,
    pub scores: Vec<f64>,
}

pub fn read_score_file(path: &Path) -> Result<Vec<ScoreRecord>, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| EvalError::InvalidInput(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::InvalidInput(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn write_score_file(path: &Path, records: &[ScoreRecord]) -> Result<(), EvalError> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).expect("score records serialize"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| EvalError::InvalidInput(format!("{}: {e}", path.display())))
}

/// Scores every trial that has a score record; candidates may be listed
/// in any order. Trials without scores are skipped.
pub fn score_records(trials: &[Trial], records: &[ScoreRecord]) -> Result<Vec<ScoredTrial>, EvalError> {
    let by_id: HashMap<&str, &ScoreRecord> = records.iter().map(|r| (r.trial_id.as_str(), r)).collect();
    let mut out = Vec::new();
    for trial in trials {
        let Some(record) = by_id.get(trial.trial_id.as_str()) else { continue };
        if record.candidate_ids.len() != record.scores.len() {
            return Err(EvalError::InvalidMatrix(format!("{}: ids and scores differ in length", trial.trial_id)));
        }
        let score_of: HashMap<&str, f64> =
            record.candidate_ids.iter().map(String::as_str).zip(record.scores.iter().copied()).collect();
        let scores = trial
            .candidate_ids
            .iter()
            .map(|id| {
                score_of
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| EvalError::InvalidMatrix(format!("{}: no score for {id}", trial.trial_id)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let matrix = ScoreMatrix::new(trial.trial_id.clone(), trial.candidate_ids.clone(), scores)?;
        let mut outcome = score_trial(&matrix);
        outcome.chosen_arrangement = Some(trial.arrangements[outcome.chosen_index].clone());
        out.push(ScoredTrial { key: trial.key, relation: trial.relation.clone(), outcome });
    }
    Ok(out)
}

pub fn cosine<T: Real>(a: &[T], b: &[T]) -> Option<T> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let dot = a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y);
    let na = a.iter().fold(T::zero(), |acc, x| acc + *x * *x).sqrt();
    let nb = b.iter().fold(T::zero(), |acc, x| acc + *x * *x).sqrt();
    (na > T::zero() && nb > T::zero()).then(|| dot / (na * nb))
}

/// Live scoring: embeds each trial's image and captions and scores by
/// cosine similarity. Images are referenced by their manifest path.
pub fn embed_scores(trials: &[Trial], backend: &dyn Backend) -> Result<Vec<ScoreRecord>, BackendError> {
    let mut out = Vec::new();
    for trial in trials {
        let Some(image) = &trial.image else { continue };
        let payload = EmbedPayload {
            texts: trial.candidates.clone(),
            image: Some(ImageRef { sha256: image.sha256.clone(), path: image.path.clone() }),
        };
        let response = call_backend(backend, &BackendRequest::new(Payload::Embed(payload)))?;
        let BackendResult::Vectors { text_vectors, image_vector } = response.result else {
            unreachable!("call_backend checks the result kind")
        };
        let image_vector =
            image_vector.ok_or_else(|| BackendError::ProtocolViolation("embed response lacks an image vector".into()))?;
        if text_vectors.len() != trial.candidates.len() {
            return Err(BackendError::ProtocolViolation("embed response has the wrong number of text vectors".into()));
        }
        let scores = text_vectors
            .iter()
            .map(|v| {
                cosine(v, &image_vector)
                    .map(f64::from)
                    .ok_or_else(|| BackendError::ProtocolViolation("degenerate embedding".into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(ScoreRecord { trial_id: trial.trial_id.clone(), candidate_ids: trial.candidate_ids.clone(), scores });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&[1.0f64, 0.0], &[2.0, 0.0]), Some(1.0));
        assert_eq!(cosine(&[1.0f32, 0.0], &[0.0, 1.0]), Some(0.0));
        assert_eq!(cosine::<f64>(&[0.0, 0.0], &[1.0, 0.0]), None);
        assert_eq!(cosine::<f64>(&[1.0], &[1.0, 0.0]), None);
    }
}
