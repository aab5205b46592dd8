//! Three-stage image validation: object presence and count, background
//! whiteness (Minimal track only) and attribute correctness via VQA.

use std::collections::BTreeMap;
use std::path::Path;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::backend::{
    call_backend, BackendError, BackendRequest, BackendResult, Backends, DetectPayload, ImageRef, Payload,
    VqaPayload,
};
use crate::concept::{Concept, ConceptId, TaskKind, Track};
use crate::numeric::{ratio_of, Real};
use crate::raster::{luma, read_png, Raster};
use crate::vocab::Vocabulary;

/// Normalized bounding box, `0 <= x0 < x1 <= 1` and likewise for y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn is_valid(&self) -> bool {
        (0.0..1.0).contains(&self.x0)
            && self.x0 < self.x1
            && self.x1 <= 1.0
            && (0.0..1.0).contains(&self.y0)
            && self.y0 < self.y1
            && self.y1 <= 1.0
    }

    /// Pixel bounds, half-open, covering every pixel the box touches.
    pub fn pixel_bounds(&self, width: u32, height: u32) -> (u32, u32, u32, u32) {
        let clamp = |v: f64, max: u32| (v.max(0.0).min(max as f64)) as u32;
        (
            clamp((self.x0 * width as f64).floor(), width),
            clamp((self.y0 * height as f64).floor(), height),
            clamp((self.x1 * width as f64).ceil(), width),
            clamp((self.y1 * height as f64).ceil(), height),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub score: f64,
    pub bbox: BBox,
    /// Segmentation mask; nonzero pixels belong to the object.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<ImageRef>,
}

impl Detection {
    pub fn is_valid(&self) -> bool {
        self.bbox.is_valid() && (0.0..=1.0).contains(&self.score)
    }
}

/// Pixels excluded from the background check.
#[derive(Debug, Clone)]
pub enum ObjectRegion {
    Box(BBox),
    Mask(GrayImage),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaQuery {
    pub question: String,
    pub allowed_answers: Vec<String>,
    pub expected: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ObjectCheck,
    BackgroundCheck,
    AttributeCheck,
}

impl Stage {
    pub const ORDER: [Stage; 3] = [Stage::ObjectCheck, Stage::BackgroundCheck, Stage::AttributeCheck];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerCheck {
    pub question: String,
    pub expected: String,
    pub answer: String,
    pub correct: bool,
    pub in_vocabulary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StageDetail {
    Objects {
        expected: BTreeMap<String, u32>,
        detected: BTreeMap<String, u32>,
        unexpected: Vec<String>,
    },
    Background {
        white_pixels: usize,
        background_pixels: usize,
        fraction: Option<f64>,
    },
    Answers {
        answers: Vec<AnswerCheck>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub passed: bool,
    pub detail: StageDetail,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ValidationStatus {
    Validated,
    Rejected { stage: Stage },
    /// A backend failed; excluded from survival denominators.
    Errored { stage: Stage, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub image_id: String,
    pub concept_id: ConceptId,
    pub track: Track,
    pub outcomes: Vec<StageOutcome>,
    #[serde(flatten)]
    pub status: ValidationStatus,
}

impl ValidationReport {
    pub fn is_validated(&self) -> bool {
        self.status == ValidationStatus::Validated
    }

    pub fn is_errored(&self) -> bool {
        matches!(self.status, ValidationStatus::Errored { .. })
    }

    pub fn passed(&self, stage: Stage) -> bool {
        self.outcomes.iter().any(|o| o.stage == stage && o.passed)
    }

    /// Stage order and short-circuit invariants.
    pub fn is_well_formed(&self) -> bool {
        let expected: Vec<Stage> = stages_for(self.track).collect();
        let stages: Vec<Stage> = self.outcomes.iter().map(|o| o.stage).collect();
        if !expected.starts_with(&stages) {
            return false;
        }
        let failures = self.outcomes.iter().filter(|o| !o.passed).count();
        if failures > 1 || (failures == 1 && self.outcomes.last().is_some_and(|o| o.passed)) {
            return false;
        }
        let all_passed = self.outcomes.iter().all(|o| o.passed);
        match &self.status {
            ValidationStatus::Validated => all_passed && self.outcomes.len() == expected.len(),
            ValidationStatus::Rejected { stage } => self.outcomes.last().is_some_and(|o| o.stage == *stage && !o.passed),
            ValidationStatus::Errored { .. } => all_passed,
        }
    }
}

pub fn stages_for(track: Track) -> impl Iterator<Item = Stage> {
    Stage::ORDER.into_iter().filter(move |s| track == Track::Minimal || *s != Stage::BackgroundCheck)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub luma_min: u8,
    pub min_white_fraction: f64,
    pub box_threshold: f64,
    pub text_threshold: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            luma_min: 190,
            min_white_fraction: 0.70,
            box_threshold: DetectPayload::DEFAULT_BOX_THRESHOLD,
            text_threshold: DetectPayload::DEFAULT_TEXT_THRESHOLD,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error("{answers} answers for {queries} questions")]
    AnswerCountMismatch { answers: usize, queries: usize },
    #[error("object region out of bounds")]
    RegionOutOfBounds,
}

fn normalize_label(s: &str) -> String {
    s.trim_matches(|c: char| !c.is_alphanumeric())
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Object presence and cardinality. Extra labels are tolerated on the
/// Contextual track and rejected on the Minimal track.
pub fn check_objects(detections: &[Detection], concept: &Concept, track: Track) -> StageOutcome {
    let mut expected = BTreeMap::new();
    let mut detected = BTreeMap::new();
    let mut unexpected = Vec::new();
    for entry in &concept.objects {
        expected.insert(entry.name.clone(), entry.expected_count);
        detected.insert(entry.name.clone(), 0u32);
    }
    for det in detections {
        let label = normalize_label(&det.label);
        match concept.objects.iter().find(|o| o.matches_label(&label)) {
            Some(entry) => *detected.get_mut(&entry.name).expect("seeded above") += 1,
            None => unexpected.push(label),
        }
    }
    let counts_match = expected == detected;
    let extras_ok = track == Track::Contextual || unexpected.is_empty();
    let reason = if !counts_match {
        Some("object class or cardinality mismatch".to_string())
    } else if !extras_ok {
        Some(format!("unexpected objects on minimal image: {}", unexpected.join(", ")))
    } else {
        None
    };
    StageOutcome {
        stage: Stage::ObjectCheck,
        passed: counts_match && extras_ok,
        detail: StageDetail::Objects { expected, detected, unexpected },
        reason,
    }
}

/// Background pixels with luma at or above `luma_min`, over all background
/// pixels. Returns `(white, total, fraction)`; fraction is `None` when every
/// pixel is covered by an object region.
pub fn white_fraction<T: Real>(
    raster: &Raster,
    regions: &[ObjectRegion],
    luma_min: u8,
) -> Result<(usize, usize, Option<T>), ValidationError> {
    let (w, h) = raster.dimensions();
    let mut masked = vec![false; (w as usize) * (h as usize)];
    for region in regions {
        match region {
            ObjectRegion::Box(bbox) => {
                let (x0, y0, x1, y1) = bbox.pixel_bounds(w, h);
                for y in y0..y1 {
                    for x in x0..x1 {
                        masked[(y * w + x) as usize] = true;
                    }
                }
            }
            ObjectRegion::Mask(mask) => {
                if mask.dimensions() != (w, h) {
                    return Err(ValidationError::RegionOutOfBounds);
                }
                for (x, y, p) in mask.enumerate_pixels() {
                    if p.0[0] > 0 {
                        masked[(y * w + x) as usize] = true;
                    }
                }
            }
        }
    }
    let mut white = 0usize;
    let mut total = 0usize;
    for (x, y, p) in raster.enumerate_pixels() {
        if masked[(y * w + x) as usize] {
            continue;
        }
        total += 1;
        if luma(p.0) >= luma_min {
            white += 1;
        }
    }
    Ok((white, total, ratio_of(white, total)))
}

pub fn check_background(
    raster: &Raster,
    regions: &[ObjectRegion],
    config: &ValidationConfig,
) -> Result<StageOutcome, ValidationError> {
    let (white, total, fraction) = white_fraction::<f64>(raster, regions, config.luma_min)?;
    let (passed, reason) = match fraction {
        None => (false, Some("AllPixelsMasked".to_string())),
        Some(f) if f >= config.min_white_fraction => (true, None),
        Some(f) => (false, Some(format!("white background fraction {f:.4} below {}", config.min_white_fraction))),
    };
    Ok(StageOutcome {
        stage: Stage::BackgroundCheck,
        passed,
        detail: StageDetail::Background { white_pixels: white, background_pixels: total, fraction },
        reason,
    })
}

fn noun_phrase(entry: &crate::vocab::ObjectEntry) -> (String, &'static str) {
    if entry.is_plural() {
        (entry.plural.clone(), "are")
    } else {
        (entry.name.clone(), "is")
    }
}

/// One color question per object, or one relation question per chained pair.
pub fn build_attribute_questions(concept: &Concept, vocab: &Vocabulary) -> Vec<VqaQuery> {
    match concept.task {
        TaskKind::ColorBinding => {
            let mut allowed = vocab.color_names();
            for c in &concept.colors {
                if !allowed.contains(c) {
                    allowed.push(c.clone());
                }
            }
            concept
                .objects
                .iter()
                .zip(&concept.colors)
                .map(|(object, color)| {
                    let (noun, verb) = noun_phrase(object);
                    VqaQuery {
                        question: format!("What color {verb} the {noun}?"),
                        allowed_answers: allowed.clone(),
                        expected: color.clone(),
                    }
                })
                .collect()
        }
        TaskKind::PositionBinding => {
            let mut allowed = vocab.relation_names();
            for r in &concept.relations {
                if !allowed.contains(r) {
                    allowed.push(r.clone());
                }
            }
            concept
                .relations
                .iter()
                .enumerate()
                .map(|(i, relation)| {
                    let (first, verb) = noun_phrase(&concept.objects[i]);
                    let (second, _) = noun_phrase(&concept.objects[i + 1]);
                    VqaQuery {
                        question: format!("Where {verb} the {first} relative to the {second}?"),
                        allowed_answers: allowed.clone(),
                        expected: relation.clone(),
                    }
                })
                .collect()
        }
    }
}

pub fn check_attributes(answers: &[String], queries: &[VqaQuery]) -> Result<StageOutcome, ValidationError> {
    if answers.len() != queries.len() {
        return Err(ValidationError::AnswerCountMismatch { answers: answers.len(), queries: queries.len() });
    }
    let checks: Vec<AnswerCheck> = answers
        .iter()
        .zip(queries)
        .map(|(answer, query)| {
            let normalized = normalize_label(answer);
            let in_vocabulary = query.allowed_answers.iter().any(|a| normalize_label(a) == normalized);
            AnswerCheck {
                question: query.question.clone(),
                expected: query.expected.clone(),
                correct: in_vocabulary && normalized == normalize_label(&query.expected),
                answer: normalized,
                in_vocabulary,
            }
        })
        .collect();
    let out_of_vocab = checks.iter().find(|c| !c.in_vocabulary);
    let passed = checks.iter().all(|c| c.correct);
    let reason = match out_of_vocab {
        Some(c) => Some(format!("AnswerOutOfVocabulary: {:?}", c.answer)),
        None if !passed => Some("incorrect attribute answer".to_string()),
        None => None,
    };
    Ok(StageOutcome { stage: Stage::AttributeCheck, passed, detail: StageDetail::Answers { answers: checks }, reason })
}

/// Inputs shared by every sample of a validation run.
pub struct ValidationContext<'a> {
    pub backends: &'a Backends,
    pub vocab: &'a Vocabulary,
    pub config: ValidationConfig,
    /// Directory relative image paths resolve against.
    pub image_root: &'a Path,
}

impl ValidationContext<'_> {
    fn resolve(&self, path: &str) -> std::path::PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.image_root.join(p)
        }
    }
}

/// Runs the stages in order, stopping at the first failure.
pub fn validate_sample(
    image_id: &str,
    image: &ImageRef,
    concept: &Concept,
    track: Track,
    ctx: &ValidationContext<'_>,
) -> ValidationReport {
    let mut report = ValidationReport {
        image_id: image_id.to_string(),
        concept_id: concept.id.clone(),
        track,
        outcomes: Vec::new(),
        status: ValidationStatus::Validated,
    };
    let errored = |mut report: ValidationReport, stage: Stage, message: String| {
        report.status = ValidationStatus::Errored { stage, message };
        report
    };

    let detect = BackendRequest::new(Payload::Detect(DetectPayload {
        image: image.clone(),
        labels: concept.objects.iter().map(|o| o.name.clone()).collect(),
        box_threshold: ctx.config.box_threshold,
        text_threshold: ctx.config.text_threshold,
    }));
    let detections = match call_backend(ctx.backends.detect.as_ref(), &detect) {
        Ok(resp) => match resp.result {
            BackendResult::Detections { detections } => detections,
            _ => unreachable!("call_backend checks the result kind"),
        },
        Err(e) => return errored(report, Stage::ObjectCheck, e.to_string()),
    };
    if let Some(bad) = detections.iter().find(|d| !d.is_valid()) {
        let e = BackendError::ProtocolViolation(format!("invalid detection {bad:?}"));
        return errored(report, Stage::ObjectCheck, e.to_string());
    }
    let objects = check_objects(&detections, concept, track);
    let passed = objects.passed;
    report.outcomes.push(objects);
    if !passed {
        report.status = ValidationStatus::Rejected { stage: Stage::ObjectCheck };
        return report;
    }

    if track == Track::Minimal {
        let raster = match read_png(ctx.resolve(&image.path)) {
            Ok(r) => r,
            Err(e) => return errored(report, Stage::BackgroundCheck, format!("cannot read image: {e}")),
        };
        let mut regions = Vec::with_capacity(detections.len());
        for det in &detections {
            match &det.mask {
                Some(mask_ref) => match image::open(ctx.resolve(&mask_ref.path)) {
                    Ok(mask) => regions.push(ObjectRegion::Mask(mask.to_luma8())),
                    Err(e) => return errored(report, Stage::BackgroundCheck, format!("cannot read mask: {e}")),
                },
                None => regions.push(ObjectRegion::Box(det.bbox)),
            }
        }
        let background = match check_background(&raster, &regions, &ctx.config) {
            Ok(o) => o,
            Err(e) => return errored(report, Stage::BackgroundCheck, e.to_string()),
        };
        let passed = background.passed;
        report.outcomes.push(background);
        if !passed {
            report.status = ValidationStatus::Rejected { stage: Stage::BackgroundCheck };
            return report;
        }
    }

    let queries = build_attribute_questions(concept, ctx.vocab);
    let mut answers = Vec::with_capacity(queries.len());
    for query in &queries {
        let req = BackendRequest::new(Payload::Vqa(VqaPayload {
            image: image.clone(),
            question: query.question.clone(),
            allowed_answers: query.allowed_answers.clone(),
        }));
        match call_backend(ctx.backends.vqa.as_ref(), &req) {
            Ok(resp) => match resp.result {
                BackendResult::Answer { answer } => answers.push(answer),
                _ => unreachable!("call_backend checks the result kind"),
            },
            Err(e) => return errored(report, Stage::AttributeCheck, e.to_string()),
        }
    }
    let attributes = check_attributes(&answers, &queries).expect("one answer per query");
    let passed = attributes.passed;
    report.outcomes.push(attributes);
    if !passed {
        report.status = ValidationStatus::Rejected { stage: Stage::AttributeCheck };
    }
    report
}
