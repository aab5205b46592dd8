//! Text, CSV and JSON renderings of scores and survival statistics.

use std::collections::BTreeSet;
use std::fmt::Write;

use autocomp_core::dataset::SurvivalRow;
use autocomp_core::evaluator::{paired_deltas, percent, BenchmarkScores, CellScore, PairedDelta, ScoreKey};
use autocomp_core::negatives::{chance_baseline, ErrorCategory, Scheme};
use autocomp_core::numeric::ratio_of;
use autocomp_core::{Decimal, TaskKind, Track};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Csv,
    Json,
}

/// Signed delta strings per paired cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub task: TaskKind,
    pub n: usize,
    pub delta_swap: Option<String>,
    pub delta_confusion: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub scores: BenchmarkScores,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deltas: Vec<DeltaRow>,
}

impl EvalSummary {
    /// Scores plus Contextual minus Minimal deltas, computed on the
    /// table's one-decimal percentages.
    pub fn with_deltas(scores: BenchmarkScores) -> Self {
        let split = |track: Track| BenchmarkScores {
            cells: scores.cells.iter().filter(|c| c.key.track == track).cloned().collect(),
            ..BenchmarkScores::default()
        };
        let deltas = paired_deltas(&split(Track::Minimal), &split(Track::Contextual), table_value)
            .into_iter()
            .map(delta_row)
            .collect();
        Self { scores, deltas }
    }
}

fn table_value(cell: &CellScore) -> Option<Decimal> {
    let p = percent(cell.correct, cell.total)?;
    let rounded: Decimal = format!("{}", Decimal(p)).parse().expect("formatted decimals parse");
    Some(rounded)
}

pub fn delta_row(d: PairedDelta<Decimal>) -> DeltaRow {
    DeltaRow {
        task: d.task,
        n: d.n,
        delta_swap: d.swap.map(|v| v.signed(1)),
        delta_confusion: d.confusion.map(|v| v.signed(1)),
    }
}

pub enum Results<'a> {
    Scores(&'a EvalSummary),
    Survival(&'a [SurvivalRow]),
}

pub fn emit_report(results: &Results<'_>, format: Format) -> String {
    match (results, format) {
        (Results::Scores(s), Format::Json) => serde_json::to_string_pretty(s).expect("scores serialize") + "\n",
        (Results::Scores(s), Format::Csv) => scores_csv(&s.scores),
        (Results::Scores(s), Format::Table) => {
            let mut out = scores_table(&s.scores);
            if !s.deltas.is_empty() {
                out.push('\n');
                out.push_str(&deltas_table(&s.deltas));
            }
            if !s.scores.per_relation.is_empty() {
                out.push('\n');
                out.push_str(&relation_table(&s.scores));
            }
            if !s.scores.error_histograms.is_empty() {
                out.push('\n');
                out.push_str(&error_table(&s.scores));
            }
            out
        }
        (Results::Survival(rows), Format::Json) => serde_json::to_string_pretty(rows).expect("stats serialize") + "\n",
        (Results::Survival(rows), Format::Csv) => survival_csv(rows),
        (Results::Survival(rows), Format::Table) => survival_table(rows),
    }
}

fn pct(correct: usize, total: usize) -> String {
    percent(correct, total).map(|p| format!("{}", Decimal(p))).unwrap_or_else(|| "-".into())
}

pub fn scores_csv(scores: &BenchmarkScores) -> String {
    let mut out = String::from("task,n,track,scheme,accuracy,count\n");
    for c in &scores.cells {
        let acc = percent(c.correct, c.total).map(|p| format!("{:.2}", Decimal(p))).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{},{}", c.key.task, c.key.n, c.key.track, c.key.scheme.as_str(), acc, c.total);
    }
    out
}

fn render_grid(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    out.push_str(&line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>()));
    for row in rows {
        out.push_str(&line(row));
    }
    out
}

fn pair_cell(scores: &BenchmarkScores, task: TaskKind, n: usize, track: Track) -> String {
    let get = |scheme| {
        scores
            .cell(&ScoreKey { task, n, track, scheme })
            .map(|c| pct(c.correct, c.total))
            .unwrap_or_else(|| "-".into())
    };
    format!("{}/{}", get(Scheme::Swap), get(Scheme::Confusion))
}

fn chance_cell(task: TaskKind, n: usize) -> String {
    let get = |scheme| {
        chance_baseline(task, n, scheme)
            .map(|p| {
                let tenths = (p.numer() * 2000u32 + p.denom()) / (p.denom() * 2u32);
                let tenths: u64 = tenths.to_string().parse().expect("a percentage fits in u64");
                format!("{}.{}", tenths / 10, tenths % 10)
            })
            .unwrap_or_else(|_| "-".into())
    };
    format!("{}/{}", get(Scheme::Swap), get(Scheme::Confusion))
}

/// One row per (task, N) with "Swap/Conf" cells per track and the chance
/// baseline.
pub fn scores_table(scores: &BenchmarkScores) -> String {
    let groups: BTreeSet<(TaskKind, usize)> = scores.cells.iter().map(|c| (c.key.task, c.key.n)).collect();
    let header: Vec<String> = ["Task", "N", "Minimal Swap/Conf", "Contextual Swap/Conf", "Chance Swap/Conf"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = groups
        .iter()
        .map(|&(task, n)| {
            vec![
                task.to_string(),
                n.to_string(),
                pair_cell(scores, task, n, Track::Minimal),
                pair_cell(scores, task, n, Track::Contextual),
                chance_cell(task, n),
            ]
        })
        .collect();
    render_grid(&header, &rows)
}

pub fn deltas_table(deltas: &[DeltaRow]) -> String {
    let header = ["Task", "N", "Delta Swap", "Delta Conf"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = deltas
        .iter()
        .map(|d| {
            vec![
                d.task.to_string(),
                d.n.to_string(),
                d.delta_swap.clone().unwrap_or_else(|| "-".into()),
                d.delta_confusion.clone().unwrap_or_else(|| "-".into()),
            ]
        })
        .collect();
    render_grid(&header, &rows)
}

fn relation_table(scores: &BenchmarkScores) -> String {
    let header = ["Track", "Relation", "Accuracy", "Count"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = scores
        .per_relation
        .iter()
        .map(|r| vec![r.track.to_string(), r.relation.clone(), pct(r.correct, r.total), r.total.to_string()])
        .collect();
    render_grid(&header, &rows)
}

fn error_table(scores: &BenchmarkScores) -> String {
    let mut header = vec!["N".to_string(), "Track".to_string(), "Incorrect".to_string()];
    header.extend(ErrorCategory::ALL.iter().map(|c| c.label().to_string()));
    let rows: Vec<Vec<String>> = scores
        .error_histograms
        .iter()
        .map(|h| {
            let mut row = vec![h.n.to_string(), h.track.to_string(), h.incorrect.to_string()];
            row.extend(ErrorCategory::ALL.iter().map(|c| pct(h.counts.get(c).copied().unwrap_or(0), h.incorrect)));
            row
        })
        .collect();
    render_grid(&header, &rows)
}

fn rate(passed: usize, denominator: usize) -> String {
    ratio_of::<f64>(passed, denominator).map(|r| format!("{:.1}", 100.0 * r)).unwrap_or_else(|| "-".into())
}

/// Per-stage survival rates; the background column applies to the
/// Minimal track only.
pub fn survival_table(rows: &[SurvivalRow]) -> String {
    let header = ["Task", "N", "Track", "Generated", "Errored", "Object", "Background", "Attribute"]
        .map(String::from)
        .to_vec();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let c = &r.counts;
            let d = c.denominator();
            vec![
                r.task.to_string(),
                r.n.to_string(),
                r.track.to_string(),
                c.generated.to_string(),
                c.errored.to_string(),
                rate(c.passed_object, d),
                c.passed_background.map(|b| rate(b, d)).unwrap_or_else(|| "n/a".into()),
                rate(c.passed_attribute, d),
            ]
        })
        .collect();
    render_grid(&header, &body)
}

pub fn survival_csv(rows: &[SurvivalRow]) -> String {
    let mut out = String::from("task,n,track,generated,errored,passed_object,passed_background,passed_attribute\n");
    for r in rows {
        let c = &r.counts;
        let bg = c.passed_background.map(|b| b.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.task, r.n, r.track, c.generated, c.errored, c.passed_object, bg, c.passed_attribute
        );
    }
    out
}
