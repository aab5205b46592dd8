use std::collections::BTreeMap;
use std::ops::Sub;

use serde::{Deserialize, Serialize};

use crate::concept::{TaskKind, Track};
use crate::negatives::{error_category, ErrorCategory, Scheme};
use crate::numeric::{ratio_of, Rational64, Real};

use super::{EvalError, TrialOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScoreKey {
    pub task: TaskKind,
    pub n: usize,
    pub track: Track,
    pub scheme: Scheme,
}

impl std::fmt::Display for ScoreKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} N={} {} {}", self.task, self.n, self.track, self.scheme.as_str())
    }
}

/// One scored trial with the metadata aggregation groups by.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredTrial {
    pub key: ScoreKey,
    /// The concept's first relation, for position concepts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
    pub outcome: TrialOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellScore {
    #[serde(flatten)]
    pub key: ScoreKey,
    pub correct: usize,
    pub total: usize,
    pub ties: usize,
}

impl CellScore {
    pub fn accuracy<T: Real>(&self) -> Option<T> {
        ratio_of(self.correct, self.total)
    }
}

/// Accuracy in percent, exact.
pub fn percent(correct: usize, total: usize) -> Option<Rational64> {
    (total > 0).then(|| Rational64::new(100 * correct as i64, total as i64))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationScore {
    pub track: Track,
    pub relation: String,
    pub correct: usize,
    pub total: usize,
}

/// Chosen-negative categories over incorrect color Confusion trials.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    pub n: usize,
    pub track: Track,
    pub incorrect: usize,
    pub counts: BTreeMap<ErrorCategory, usize>,
}

impl ErrorHistogram {
    pub fn fractions<T: Real>(&self) -> BTreeMap<ErrorCategory, Option<T>> {
        self.counts.iter().map(|(k, &v)| (*k, ratio_of(v, self.incorrect))).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkScores {
    pub cells: Vec<CellScore>,
    pub per_relation: Vec<RelationScore>,
    pub error_histograms: Vec<ErrorHistogram>,
}

impl BenchmarkScores {
    pub fn cell(&self, key: &ScoreKey) -> Option<&CellScore> {
        self.cells.iter().find(|c| c.key == *key)
    }
}

/// Micro-averaged accuracy per cell. Every key in `requested` must have
/// trials; an empty `requested` reports the cells present.
pub fn aggregate(trials: &[ScoredTrial], requested: &[ScoreKey]) -> Result<BenchmarkScores, EvalError> {
    let mut cells: BTreeMap<ScoreKey, CellScore> = BTreeMap::new();
    let mut relations: BTreeMap<(Track, String), RelationScore> = BTreeMap::new();
    let mut histograms: BTreeMap<(usize, Track), ErrorHistogram> = BTreeMap::new();
    for trial in trials {
        let key = trial.key;
        let cell = cells.entry(key).or_insert(CellScore { key, correct: 0, total: 0, ties: 0 });
        cell.total += 1;
        cell.correct += usize::from(trial.outcome.correct);
        cell.ties += usize::from(trial.outcome.tie);

        if key.task == TaskKind::PositionBinding && key.n == 2 && key.scheme == Scheme::Swap {
            if let Some(relation) = &trial.relation {
                let r = relations.entry((key.track, relation.clone())).or_insert(RelationScore {
                    track: key.track,
                    relation: relation.clone(),
                    correct: 0,
                    total: 0,
                });
                r.total += 1;
                r.correct += usize::from(trial.outcome.correct);
            }
        }

        if key.task == TaskKind::ColorBinding && key.scheme == Scheme::Confusion && !trial.outcome.correct {
            let h = histograms.entry((key.n, key.track)).or_insert_with(|| ErrorHistogram {
                n: key.n,
                track: key.track,
                incorrect: 0,
                counts: ErrorCategory::ALL.iter().map(|c| (*c, 0)).collect(),
            });
            let arrangement = trial.outcome.chosen_arrangement.as_ref().ok_or_else(|| {
                EvalError::InvalidInput(format!("incorrect {key} trial has no chosen arrangement"))
            })?;
            let category = error_category(key.task, arrangement)
                .map_err(|e| EvalError::InvalidInput(format!("{key}: {e}")))?;
            h.incorrect += 1;
            *h.counts.entry(category).or_default() += 1;
        }
    }
    if let Some(missing) = requested.iter().find(|k| !cells.contains_key(k)) {
        return Err(EvalError::EmptyCell(missing.to_string()));
    }
    let cells = if requested.is_empty() {
        cells.into_values().collect()
    } else {
        requested.iter().map(|k| cells[k].clone()).collect()
    };
    Ok(BenchmarkScores {
        cells,
        per_relation: relations.into_values().collect(),
        error_histograms: histograms.into_values().collect(),
    })
}

/// Contextual minus Minimal, per (task, n), for Swap and Confusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDelta<T> {
    pub task: TaskKind,
    pub n: usize,
    pub swap: Option<T>,
    pub confusion: Option<T>,
}

/// Deltas from per-cell values in any exact or floating type, e.g. the
/// exact percentages of [`percent`] or decimal table entries.
pub fn paired_deltas<T, F>(minimal: &BenchmarkScores, contextual: &BenchmarkScores, value: F) -> Vec<PairedDelta<T>>
where
    T: Sub<Output = T> + Copy,
    F: Fn(&CellScore) -> Option<T>,
{
    let mut groups: BTreeMap<(TaskKind, usize), PairedDelta<T>> = BTreeMap::new();
    for m in &minimal.cells {
        let ctx_key = ScoreKey { track: Track::Contextual, ..m.key };
        let Some(c) = contextual.cell(&ctx_key) else { continue };
        let delta = match (value(m), value(c)) {
            (Some(mv), Some(cv)) => Some(cv - mv),
            _ => None,
        };
        let entry = groups
            .entry((m.key.task, m.key.n))
            .or_insert(PairedDelta { task: m.key.task, n: m.key.n, swap: None, confusion: None });
        match m.key.scheme {
            Scheme::Swap => entry.swap = delta,
            Scheme::Confusion => entry.confusion = delta,
            Scheme::Positive => {}
        }
    }
    groups.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::negatives::Arrangement;
    use crate::numeric::Decimal;

    fn key(task: TaskKind, n: usize, track: Track, scheme: Scheme) -> ScoreKey {
        ScoreKey { task, n, track, scheme }
    }

    fn trial(k: ScoreKey, correct: bool, chosen: Option<(Vec<usize>, Vec<usize>)>, relation: Option<&str>) -> ScoredTrial {
        ScoredTrial {
            key: k,
            relation: relation.map(str::to_string),
            outcome: TrialOutcome {
                correct,
                chosen_index: usize::from(!correct),
                chosen_arrangement: chosen.map(|(o, a)| Arrangement {
                    object_tuple: o,
                    attribute_tuple: a,
                    scheme: Scheme::Confusion,
                }),
                tie: false,
            },
        }
    }

    #[test]
    fn accuracy_and_histogram() {
        let k = key(TaskKind::ColorBinding, 2, Track::Minimal, Scheme::Confusion);
        let trials = vec![
            trial(k, true, None, None),
            trial(k, true, None, None),
            trial(k, true, None, None),
            trial(k, false, Some((vec![0, 1], vec![0, 0])), None),
        ];
        let scores = aggregate(&trials, &[k]).unwrap();
        assert_eq!(scores.cells[0].accuracy::<f64>(), Some(0.75));
        assert_eq!(percent(3, 4), Some(Rational64::from_integer(75)));
        let h = &scores.error_histograms[0];
        assert_eq!(h.counts[&ErrorCategory::SameColorDiffObj], 1);
        assert_eq!(h.counts.values().sum::<usize>(), h.incorrect);
        let missing = key(TaskKind::ColorBinding, 3, Track::Minimal, Scheme::Confusion);
        assert!(matches!(aggregate(&trials, &[missing]), Err(EvalError::EmptyCell(_))));
    }

    #[test]
    fn per_relation_grouping() {
        let k = key(TaskKind::PositionBinding, 2, Track::Minimal, Scheme::Swap);
        let trials = vec![
            trial(k, true, None, Some("under")),
            trial(k, false, None, Some("under")),
            trial(k, true, None, Some("to the left of")),
        ];
        let scores = aggregate(&trials, &[]).unwrap();
        let under = scores.per_relation.iter().find(|r| r.relation == "under").unwrap();
        let left = scores.per_relation.iter().find(|r| r.relation == "to the left of").unwrap();
        assert_eq!((under.correct, under.total), (1, 2));
        assert_eq!((left.correct, left.total), (1, 1));
    }

    #[test]
    fn deltas_from_table_values() {
        let mk = |track, scheme| CellScore { key: key(TaskKind::PositionBinding, 2, track, scheme), correct: 0, total: 0, ties: 0 };
        let minimal = BenchmarkScores { cells: vec![mk(Track::Minimal, Scheme::Swap)], ..Default::default() };
        let contextual = BenchmarkScores { cells: vec![mk(Track::Contextual, Scheme::Swap)], ..Default::default() };
        let table = |c: &CellScore| -> Option<Decimal> {
            Some(if c.key.track == Track::Minimal { "61.1" } else { "74.6" }.parse().unwrap())
        };
        let deltas = paired_deltas(&minimal, &contextual, table);
        assert_eq!(deltas[0].swap.unwrap().signed(1), "+13.5");
        assert_eq!(deltas[0].confusion, None);
    }
}
