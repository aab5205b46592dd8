//! JSONL manifests, benchmark curation and survival statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::caption::CaptionRecord;
use crate::concept::{Concept, ConceptId, TaskKind, Track};
use crate::negatives::NegativeSet;
use crate::numeric::{ratio_of, Real};
use crate::validation::{Stage, ValidationReport};

pub const MANIFEST_SCHEMA: &str = "autocomp/1";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("io failure on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record invariant violated: {0}")]
    InvariantViolation(String),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub model_id: String,
}

/// Unix milliseconds at which each stage wrote the record.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTimestamps {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captioned: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesized: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validated: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negatives: Option<u64>,
}

/// One (concept, track) lifecycle record. Fields fill in pipeline order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub schema: String,
    pub concept_id: ConceptId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept: Option<Concept>,
    pub track: Track,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<CaptionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub negatives: Vec<NegativeSet>,
    #[serde(default)]
    pub timestamps: StageTimestamps,
}

impl ManifestRecord {
    pub fn new(concept: Concept, track: Track) -> Self {
        Self {
            schema: MANIFEST_SCHEMA.to_string(),
            concept_id: concept.id.clone(),
            concept: Some(concept),
            track,
            caption: None,
            image: None,
            validation: None,
            negatives: Vec::new(),
            timestamps: StageTimestamps::default(),
        }
    }

    pub fn concept(&self) -> Result<&Concept, DatasetError> {
        self.concept
            .as_ref()
            .ok_or_else(|| DatasetError::InvariantViolation(format!("record {} has no concept", self.concept_id)))
    }

    pub fn is_validated(&self) -> bool {
        self.validation.as_ref().is_some_and(ValidationReport::is_validated)
    }

    /// Every stage that applies to this record has run.
    pub fn is_complete(&self) -> bool {
        match &self.validation {
            None => false,
            Some(v) if v.is_validated() => {
                !self.negatives.is_empty() || self.concept.as_ref().is_some_and(|c| c.n < 2)
            }
            Some(_) => true,
        }
    }

    pub fn without_timestamps(&self) -> Self {
        Self { timestamps: StageTimestamps::default(), ..self.clone() }
    }

    pub fn check(&self) -> Result<(), DatasetError> {
        let fail = |m: String| Err(DatasetError::InvariantViolation(format!("{} ({}): {m}", self.concept_id, self.track)));
        if self.schema != MANIFEST_SCHEMA {
            return fail(format!("unknown schema {:?}", self.schema));
        }
        let concept = self.concept()?;
        if concept.check().is_err() || !concept.id_is_consistent() || concept.id != self.concept_id {
            return fail("concept does not re-hash to concept_id".into());
        }
        if let Some(caption) = &self.caption {
            if caption.concept_id != self.concept_id || caption.track != self.track || !caption.match_result.passed {
                return fail("caption does not belong to this record".into());
            }
        }
        if self.image.is_some() && self.caption.is_none() {
            return fail("image without caption".into());
        }
        if let Some(report) = &self.validation {
            if self.image.is_none() {
                return fail("validation without image".into());
            }
            if report.concept_id != self.concept_id || report.track != self.track || !report.is_well_formed() {
                return fail("malformed validation report".into());
            }
        }
        if !self.negatives.is_empty() && !self.is_validated() {
            return fail("negatives on a record that is not validated".into());
        }
        if self.negatives.iter().any(|n| n.concept_id != self.concept_id || n.track != self.track) {
            return fail("negative set does not belong to this record".into());
        }
        Ok(())
    }
}

/// Manifest text: one compact JSON record per line, in the given order.
pub fn serialize_manifest(records: &[ManifestRecord]) -> Result<String, DatasetError> {
    let mut out = String::new();
    for record in records {
        record.check()?;
        out.push_str(&serde_json::to_string(record).expect("records serialize"));
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>, DatasetError> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            let record: ManifestRecord =
                serde_json::from_str(line).map_err(|e| DatasetError::Parse { line: i + 1, message: e.to_string() })?;
            record.check()?;
            Ok(record)
        })
        .collect()
}

/// Writes the whole manifest through a temporary file and rename.
pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<(), DatasetError> {
    let text = serialize_manifest(records)?;
    write_atomic(path, text.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    parse_manifest(&text)
}

/// Missing file reads as an empty manifest.
pub fn read_manifest_or_empty(path: &Path) -> Result<Vec<ManifestRecord>, DatasetError> {
    if path.exists() {
        read_manifest(path)
    } else {
        Ok(Vec::new())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_error(parent))?;
    }
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp).map_err(io_error(&tmp))?;
    file.write_all(bytes).map_err(io_error(&tmp))?;
    file.sync_all().map_err(io_error(&tmp))?;
    fs::rename(&tmp, path).map_err(io_error(path))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkSets {
    pub minimal_ids: BTreeSet<ConceptId>,
    pub contextual_ids: BTreeSet<ConceptId>,
    pub paired_ids: BTreeSet<ConceptId>,
    /// Concept ids seen more than once within a track; the first was kept.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub duplicates: Vec<(Track, ConceptId)>,
}

/// Validated concept ids per track and their intersection.
pub fn curate_benchmarks(minimal: &[ManifestRecord], contextual: &[ManifestRecord]) -> BenchmarkSets {
    let mut duplicates = Vec::new();
    let mut validated = |records: &[ManifestRecord]| {
        let mut ids = BTreeSet::new();
        for r in records.iter().filter(|r| r.is_validated()) {
            if !ids.insert(r.concept_id.clone()) {
                log::warn!("duplicate {} record for concept {}; keeping the first", r.track, r.concept_id);
                duplicates.push((r.track, r.concept_id.clone()));
            }
        }
        ids
    };
    let minimal_ids = validated(minimal);
    let contextual_ids = validated(contextual);
    let paired_ids = minimal_ids.intersection(&contextual_ids).cloned().collect();
    BenchmarkSets { minimal_ids, contextual_ids, paired_ids, duplicates }
}

/// Validated records of one track, first occurrence per concept.
pub fn validated_records<'a>(records: &'a [ManifestRecord], keep: Option<&BTreeSet<ConceptId>>) -> Vec<&'a ManifestRecord> {
    let mut seen = BTreeSet::new();
    records
        .iter()
        .filter(|r| r.is_validated() && keep.is_none_or(|k| k.contains(&r.concept_id)))
        .filter(|r| seen.insert(r.concept_id.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub task: TaskKind,
    pub n: usize,
    pub track: Track,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurvivalCounts {
    /// Samples that reached validation, errored ones included.
    pub generated: usize,
    pub errored: usize,
    pub passed_object: usize,
    /// Minimal track only.
    pub passed_background: Option<usize>,
    pub passed_attribute: usize,
}

impl SurvivalCounts {
    /// Samples the rates are computed over.
    pub fn denominator(&self) -> usize {
        self.generated - self.errored
    }

    /// Fraction of non-errored samples passing each stage, in stage order.
    /// `None` when every sample errored.
    pub fn rates<T: Real>(&self) -> Vec<(Stage, Option<T>)> {
        let d = self.denominator();
        let mut out = vec![(Stage::ObjectCheck, ratio_of(self.passed_object, d))];
        if let Some(bg) = self.passed_background {
            out.push((Stage::BackgroundCheck, ratio_of(bg, d)));
        }
        out.push((Stage::AttributeCheck, ratio_of(self.passed_attribute, d)));
        out
    }

    pub fn is_monotone(&self) -> bool {
        let mut chain = vec![self.denominator(), self.passed_object];
        chain.extend(self.passed_background);
        chain.push(self.passed_attribute);
        chain.windows(2).all(|w| w[0] >= w[1])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurvivalStats {
    pub cells: BTreeMap<CellKey, SurvivalCounts>,
}

/// Stage pass counts per (task, n, track) from validation reports.
pub fn survival_stats(records: &[ManifestRecord]) -> Result<SurvivalStats, DatasetError> {
    let mut cells: BTreeMap<CellKey, SurvivalCounts> = BTreeMap::new();
    for record in records {
        let Some(report) = &record.validation else { continue };
        if !report.is_well_formed() {
            return Err(DatasetError::InvariantViolation(format!("malformed report for {}", record.concept_id)));
        }
        let concept = record.concept()?;
        let key = CellKey { task: concept.task, n: concept.n, track: record.track };
        let counts = cells.entry(key).or_insert_with(|| SurvivalCounts {
            passed_background: (record.track == Track::Minimal).then_some(0),
            ..SurvivalCounts::default()
        });
        counts.generated += 1;
        if report.is_errored() {
            counts.errored += 1;
            continue;
        }
        counts.passed_object += usize::from(report.passed(Stage::ObjectCheck));
        if let Some(bg) = counts.passed_background.as_mut() {
            *bg += usize::from(report.passed(Stage::BackgroundCheck));
        }
        counts.passed_attribute += usize::from(report.passed(Stage::AttributeCheck));
    }
    if let Some((key, _)) = cells.iter().find(|(_, c)| !c.is_monotone()) {
        return Err(DatasetError::InvariantViolation(format!("survival counts not monotone for {key:?}")));
    }
    Ok(SurvivalStats { cells })
}

/// Writes `manifest.jsonl`, `negatives.jsonl`, `stats.json` and copies
/// images into `images/<track>/` under `dir`.
pub fn export_benchmark(
    dir: &Path,
    source_root: &Path,
    records: &[&ManifestRecord],
    stats: &SurvivalStats,
) -> Result<(), DatasetError> {
    let owned: Vec<ManifestRecord> = records.iter().map(|r| (*r).clone()).collect();
    write_manifest(&dir.join("manifest.jsonl"), &owned)?;
    let mut negatives = String::new();
    for record in records {
        for set in &record.negatives {
            negatives.push_str(&serde_json::to_string(set).expect("negative sets serialize"));
            negatives.push('\n');
        }
        if let Some(image) = &record.image {
            let target = dir.join(&image.path);
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent).map_err(io_error(parent))?;
            }
            let source = source_root.join(&image.path);
            fs::copy(&source, &target).map_err(io_error(&source))?;
        }
    }
    write_atomic(&dir.join("negatives.jsonl"), negatives.as_bytes())?;
    let stats_json = serde_json::to_string_pretty(&stats_as_rows(stats)).expect("stats serialize");
    write_atomic(&dir.join("stats.json"), stats_json.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRow {
    pub task: TaskKind,
    pub n: usize,
    pub track: Track,
    #[serde(flatten)]
    pub counts: SurvivalCounts,
}

/// Stats as a flat list, the shape written to `stats.json`.
pub fn stats_as_rows(stats: &SurvivalStats) -> Vec<SurvivalRow> {
    stats
        .cells
        .iter()
        .map(|(k, c)| SurvivalRow { task: k.task, n: k.n, track: k.track, counts: c.clone() })
        .collect()
}
