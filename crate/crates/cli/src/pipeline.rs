//! Stage orchestration over per-track manifests.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use autocomp_core::backend::{
    call_backend, Backend, BackendError, BackendRequest, BackendResponse, BackendResult, Backends, CachedBackend,
    Capability, HttpBackend, HttpConfig, ImageGenPayload, ImageRef, MockBackend, Payload,
};
use autocomp_core::caption::{generate_contextual, render_minimal, ContextualConfig, ContextualOutcome, PromptTemplates};
use autocomp_core::concept::sample_concepts;
use autocomp_core::dataset::{
    curate_benchmarks, export_benchmark, read_manifest_or_empty, stats_as_rows, survival_stats, validated_records,
    write_atomic, write_manifest, BenchmarkSets, ImageEntry, ManifestRecord, SurvivalRow,
};
use autocomp_core::negatives::{build_negative_set, Scheme};
use autocomp_core::validation::{validate_sample, ValidationContext};
use autocomp_core::{derive_seed, sha256_hex, Concept, ConceptId, Track, Vocabulary};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, EndpointSpec, RunConfig, StageName};

pub const CACHE_ENV: &str = "AUTOCOMP_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Success,
    Partial,
    ConfigError,
    Unreachable,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::Partial => 1,
            ExitStatus::ConfigError => 2,
            ExitStatus::Unreachable => 3,
        }
    }
}

#[derive(Debug)]
pub enum PipelineError {
    Config(ConfigError),
    Unreachable(String),
    Failed(anyhow::Error),
}

impl PipelineError {
    pub fn status(&self) -> ExitStatus {
        match self {
            PipelineError::Config(_) => ExitStatus::ConfigError,
            PipelineError::Unreachable(_) => ExitStatus::Unreachable,
            PipelineError::Failed(_) => ExitStatus::Partial,
        }
    }
}

impl std::fmt::Display for PipelineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PipelineError::Config(e) => write!(f, "configuration error: {e}"),
            PipelineError::Unreachable(e) => write!(f, "backend unreachable: {e}"),
            PipelineError::Failed(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for PipelineError {}

impl From<ConfigError> for PipelineError {
    fn from(e: ConfigError) -> Self {
        PipelineError::Config(e)
    }
}

impl From<anyhow::Error> for PipelineError {
    fn from(e: anyhow::Error) -> Self {
        PipelineError::Failed(e)
    }
}

/// Paths under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
    pub cache: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        let cache = std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| root.join("cache"));
        Self { root: root.to_path_buf(), cache }
    }

    pub fn manifest(&self, track: Track) -> PathBuf {
        self.root.join("manifests").join(format!("{}.jsonl", track.as_str()))
    }

    pub fn discarded(&self) -> PathBuf {
        self.root.join("discarded.jsonl")
    }

    pub fn benchmark(&self) -> PathBuf {
        self.root.join("benchmark")
    }

    pub fn blobs(&self) -> PathBuf {
        self.cache.join("blobs")
    }

    pub fn image_rel(track: Track, id: &ConceptId) -> String {
        format!("images/{}/{}.png", track.as_str(), id)
    }

    /// Removes pipeline outputs; the cache is kept.
    pub fn clear(&self) -> std::io::Result<()> {
        for dir in ["manifests", "images", "benchmark"] {
            let p = self.root.join(dir);
            if p.exists() {
                fs::remove_dir_all(&p)?;
            }
        }
        for file in ["discarded.jsonl", "run_report.json"] {
            let p = self.root.join(file);
            if p.exists() {
                fs::remove_file(&p)?;
            }
        }
        Ok(())
    }
}

/// Concepts dropped because no contextual caption survived the retries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardedRecord {
    pub concept_id: ConceptId,
    pub concept: Concept,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_text: Option<String>,
}

/// Bounds concurrent calls per capability.
struct Throttled {
    inner: Arc<dyn Backend>,
    limit: usize,
    inflight: Mutex<[usize; 5]>,
    freed: Condvar,
}

fn slot(c: Capability) -> usize {
    match c {
        Capability::TextGen => 0,
        Capability::ImageGen => 1,
        Capability::Detect => 2,
        Capability::Vqa => 3,
        Capability::Embed => 4,
    }
}

impl Backend for Throttled {
    fn call(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let i = slot(req.capability());
        {
            let mut inflight = self.inflight.lock().unwrap_or_else(|e| e.into_inner());
            while inflight[i] >= self.limit {
                inflight = self.freed.wait(inflight).unwrap_or_else(|e| e.into_inner());
            }
            inflight[i] += 1;
        }
        let out = self.inner.call(req);
        let mut inflight = self.inflight.lock().unwrap_or_else(|e| e.into_inner());
        inflight[i] -= 1;
        self.freed.notify_all();
        out
    }

    fn remote_calls(&self) -> usize {
        self.inner.remote_calls()
    }
}

type Cached = CachedBackend<Arc<dyn Backend>>;

/// Backends wrapped in the on-disk cache, plus the handles needed to read
/// call counters.
pub struct BackendSet {
    pub backends: Backends,
    endpoints: Vec<Arc<Cached>>,
}

impl BackendSet {
    pub fn remote_calls(&self) -> usize {
        self.endpoints.iter().map(|e| e.remote_calls()).sum()
    }

    pub fn cache_hits(&self) -> usize {
        self.endpoints.iter().map(|e| e.hits()).sum()
    }

    pub fn cache_misses(&self) -> usize {
        self.endpoints.iter().map(|e| e.misses()).sum()
    }
}

struct Unconfigured(Capability);

impl Backend for Unconfigured {
    fn call(&self, _: &BackendRequest) -> Result<BackendResponse, BackendError> {
        Err(BackendError::Unavailable(format!("no backend configured for {}", self.0.as_str())))
    }
}

/// Builds one cached backend per distinct endpoint. HTTP endpoints serving a
/// capability in `needed` must pass a health check.
pub fn build_backends(cfg: &RunConfig, layout: &Layout, needed: &[Capability]) -> Result<BackendSet, PipelineError> {
    let b = &cfg.backends;
    let spec_for = |c: Capability| {
        match c {
            Capability::TextGen => &b.text_gen,
            Capability::ImageGen => &b.image_gen,
            Capability::Detect => &b.detect,
            Capability::Vqa => &b.vqa,
            Capability::Embed => &b.embed,
        }
        .as_ref()
        .or(b.default.as_ref())
    };
    let mut built: HashMap<EndpointSpec, Arc<Cached>> = HashMap::new();
    let mut endpoints = Vec::new();
    let mut handle = |c: Capability| -> Result<Arc<dyn Backend>, PipelineError> {
        let Some(spec) = spec_for(c) else {
            if needed.contains(&c) {
                return Err(ConfigError(format!("no backend configured for {}", c.as_str())).into());
            }
            return Ok(Arc::new(Unconfigured(c)));
        };
        if let Some(existing) = built.get(spec) {
            return Ok(existing.clone());
        }
        let raw: Arc<dyn Backend> = match spec {
            EndpointSpec::Mock(path) => Arc::new(
                MockBackend::load(path, layout.blobs())
                    .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?,
            ),
            EndpointSpec::Url(url) => {
                let http = HttpBackend::new(HttpConfig::new(url.clone(), layout.root.clone(), layout.blobs()));
                if needed.contains(&c) {
                    http.health().map_err(|e| PipelineError::Unreachable(format!("{url}: {e}")))?;
                }
                Arc::new(http)
            }
        };
        let throttled: Arc<dyn Backend> = Arc::new(Throttled {
            inner: raw,
            limit: cfg.inflight_per_capability,
            inflight: Mutex::new([0; 5]),
            freed: Condvar::new(),
        });
        let cached = Arc::new(CachedBackend::new(throttled, layout.cache.clone()));
        built.insert(spec.clone(), cached.clone());
        endpoints.push(cached.clone());
        Ok(cached)
    };
    let backends = Backends {
        text: handle(Capability::TextGen)?,
        image: handle(Capability::ImageGen)?,
        detect: handle(Capability::Detect)?,
        vqa: handle(Capability::Vqa)?,
        embed: handle(Capability::Embed)?,
    };
    Ok(BackendSet { backends, endpoints })
}

fn needed_capabilities(cfg: &RunConfig, stages: &[StageName]) -> Vec<Capability> {
    let mut out = Vec::new();
    for s in stages {
        match s {
            StageName::Captions if cfg.tracks.contains(&Track::Contextual) => out.push(Capability::TextGen),
            StageName::Synth => out.push(Capability::ImageGen),
            StageName::Validate => out.extend([Capability::Detect, Capability::Vqa]),
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub processed: usize,
    pub skipped: usize,
    pub errored: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub discarded: usize,
    #[serde(skip)]
    unavailable: usize,
    #[serde(skip)]
    backend_ok: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetSizes {
    pub minimal: usize,
    pub contextual: usize,
    pub paired: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: ExitStatus,
    pub concepts: usize,
    pub stages: Vec<StageReport>,
    pub survival: Vec<SurvivalRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sets: Option<SetSizes>,
    pub remote_calls: usize,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

/// In-memory manifest state for one track, kept in plan order.
#[derive(Default)]
struct TrackState {
    order: Vec<ConceptId>,
    records: HashMap<ConceptId, ManifestRecord>,
}

impl TrackState {
    fn load(path: &Path) -> anyhow::Result<Self> {
        let mut state = TrackState::default();
        for r in read_manifest_or_empty(path)? {
            if state.records.contains_key(&r.concept_id) {
                warn!("duplicate record for {} in {}; keeping the first", r.concept_id, path.display());
                continue;
            }
            state.order.push(r.concept_id.clone());
            state.records.insert(r.concept_id.clone(), r);
        }
        Ok(state)
    }

    /// Records in plan order, then any others in their previous order.
    fn ordered(&self, plan: &[ConceptId]) -> Vec<ManifestRecord> {
        let planned: HashSet<&ConceptId> = plan.iter().collect();
        plan.iter()
            .chain(self.order.iter().filter(|id| !planned.contains(id)))
            .filter_map(|id| self.records.get(id).cloned())
            .collect()
    }

    fn remove(&mut self, id: &ConceptId) {
        self.records.remove(id);
        self.order.retain(|x| x != id);
    }

    fn insert(&mut self, record: ManifestRecord) {
        if !self.records.contains_key(&record.concept_id) {
            self.order.push(record.concept_id.clone());
        }
        self.records.insert(record.concept_id.clone(), record);
    }
}

pub struct Pipeline<'a> {
    cfg: &'a RunConfig,
    vocab: Vocabulary,
    layout: Layout,
    backends: &'a BackendSet,
    templates: PromptTemplates,
    plan: Vec<Concept>,
    tracks: BTreeMap<Track, TrackState>,
    discarded: Vec<DiscardedRecord>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Concepts for every task entry, in config order, without repeats.
pub fn plan_concepts(cfg: &RunConfig, vocab: &Vocabulary) -> Result<Vec<Concept>, ConfigError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for t in &cfg.tasks {
        let concepts = sample_concepts(vocab, t.task, t.n, t.count, t.seed)
            .map_err(|e| ConfigError(format!("task {} n={}: {e}", t.task, t.n)))?;
        for c in concepts {
            if seen.insert(c.id.clone()) {
                out.push(c);
            } else {
                warn!("concept {} sampled twice; keeping the first", c.id);
            }
        }
    }
    Ok(out)
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a RunConfig, vocab: Vocabulary, layout: Layout, backends: &'a BackendSet) -> Result<Self, PipelineError> {
        let plan = plan_concepts(cfg, &vocab)?;
        let mut tracks = BTreeMap::new();
        for &t in &Track::BOTH {
            tracks.insert(t, TrackState::load(&layout.manifest(t))?);
        }
        let discarded = read_jsonl(&layout.discarded())?;
        Ok(Self { cfg, vocab, layout, backends, templates: PromptTemplates::default(), plan, tracks, discarded })
    }

    fn plan_ids(&self) -> Vec<ConceptId> {
        self.plan.iter().map(|c| c.id.clone()).collect()
    }

    fn stamp(&self) -> Option<u64> {
        self.cfg.record_timestamps.then(now_ms)
    }

    pub fn flush(&self) -> anyhow::Result<()> {
        let plan = self.plan_ids();
        for (&track, state) in &self.tracks {
            let path = self.layout.manifest(track);
            if state.records.is_empty() && !path.exists() {
                continue;
            }
            write_manifest(&path, &state.ordered(&plan))?;
        }
        if !self.discarded.is_empty() {
            let mut text = String::new();
            for d in &self.discarded {
                text.push_str(&serde_json::to_string(d)?);
                text.push('\n');
            }
            write_atomic(&self.layout.discarded(), text.as_bytes())?;
        }
        Ok(())
    }

    fn is_discarded(&self, id: &ConceptId) -> bool {
        self.discarded.iter().any(|d| &d.concept_id == id)
    }

    fn pool(&self) -> anyhow::Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = self.cfg.workers {
            b = b.num_threads(w);
        }
        Ok(b.build()?)
    }

    pub fn run_stage(&mut self, stage: StageName) -> anyhow::Result<StageReport> {
        let report = match stage {
            StageName::Captions => self.captions()?,
            StageName::Synth => self.synth()?,
            StageName::Validate => self.validate()?,
            StageName::Negatives => self.negatives()?,
            StageName::Curate => self.curate()?,
        };
        self.flush()?;
        info!(
            "{stage}: processed {} skipped {} errored {} discarded {}",
            report.processed, report.skipped, report.errored, report.discarded
        );
        Ok(report)
    }

    fn captions(&mut self) -> anyhow::Result<StageReport> {
        let mut report = StageReport { stage: "captions".into(), ..StageReport::default() };
        let todo: Vec<(Concept, Track)> = self
            .plan
            .iter()
            .filter(|c| !self.is_discarded(&c.id))
            .flat_map(|c| self.cfg.tracks.iter().map(move |&t| (c.clone(), t)))
            .filter(|(c, t)| self.tracks[t].records.get(&c.id).is_none_or(|r| r.caption.is_none()))
            .collect();
        let eligible = self.plan.iter().filter(|c| !self.is_discarded(&c.id)).count() * self.cfg.tracks.len();
        report.skipped = eligible - todo.len();

        let ctx_cfg = ContextualConfig {
            retries: self.cfg.retries,
            matching: self.cfg.match_config(),
            temperature: self.cfg.text_generation.temperature,
            top_p: self.cfg.text_generation.top_p,
            max_new_tokens: self.cfg.text_generation.max_new_tokens,
            seed: self.cfg.seed,
        };
        let llm = self.backends.backends.text.clone();
        let (vocab, templates) = (&self.vocab, &self.templates);
        let results: Vec<_> = self.pool()?.install(|| {
            todo.par_iter()
                .map(|(concept, track)| match track {
                    Track::Minimal => Ok(ContextualOutcome::Record(render_minimal(concept))),
                    Track::Contextual => generate_contextual(concept, vocab, llm.as_ref(), templates, &ctx_cfg),
                })
                .collect()
        });

        let stamp = self.stamp();
        for ((concept, track), result) in todo.into_iter().zip(results) {
            match result {
                Ok(ContextualOutcome::Record(caption)) => {
                    report.backend_ok += usize::from(track == Track::Contextual);
                    let mut record = ManifestRecord::new(concept, track);
                    record.caption = Some(caption);
                    record.timestamps.captioned = stamp;
                    self.tracks.get_mut(&track).expect("track state").insert(record);
                    report.processed += 1;
                }
                Ok(ContextualOutcome::Discarded { concept_id, attempts, last_text }) => {
                    warn!("discarding concept {concept_id} after {attempts} attempts");
                    for state in self.tracks.values_mut() {
                        state.remove(&concept_id);
                    }
                    self.discarded.push(DiscardedRecord { concept_id, concept, attempts, last_text });
                    report.discarded += 1;
                    report.backend_ok += 1;
                }
                Err(e) => {
                    warn!("caption for {} ({track}) failed: {e}", concept.id);
                    report.errored += 1;
                    if let autocomp_core::caption::ContextualError::Backend(b) = &e {
                        report.unavailable += usize::from(b.is_unavailable());
                    }
                }
            }
        }
        Ok(report)
    }

    /// Records of the planned, non-discarded concepts, in plan order.
    fn work_items(&self, pending: impl Fn(&ManifestRecord) -> bool) -> (Vec<ManifestRecord>, usize) {
        let mut todo = Vec::new();
        let mut skipped = 0;
        for track in &self.cfg.tracks {
            let state = &self.tracks[track];
            for c in &self.plan {
                if let Some(r) = state.records.get(&c.id) {
                    if pending(r) {
                        todo.push(r.clone());
                    } else {
                        skipped += 1;
                    }
                }
            }
        }
        (todo, skipped)
    }

    fn synth(&mut self) -> anyhow::Result<StageReport> {
        let (todo, skipped) = self.work_items(|r| r.caption.is_some() && r.image.is_none());
        let mut report = StageReport { stage: "synth".into(), skipped, ..StageReport::default() };
        let params = self.cfg.image_generation;
        let seed = self.cfg.seed.to_string();
        let image_backend = self.backends.backends.image.clone();
        let root = self.layout.root.clone();
        let results: Vec<Result<ImageEntry, BackendError>> = self.pool()?.install(|| {
            todo.par_iter()
                .map(|r| {
                    let caption = r.caption.as_ref().expect("pending records have captions");
                    let payload = ImageGenPayload {
                        prompt: caption.text.clone(),
                        width: params.width,
                        height: params.height,
                        steps: params.steps,
                        guidance: params.guidance,
                        seed: derive_seed(&[&seed, &r.concept_id.0, r.track.as_str()]),
                    };
                    let resp = call_backend(image_backend.as_ref(), &BackendRequest::new(Payload::ImageGen(payload)))?;
                    let BackendResult::Image { image } = resp.result else {
                        unreachable!("call_backend checks the result kind")
                    };
                    let rel = Layout::image_rel(r.track, &r.concept_id);
                    store_image(&image, &root.join(&rel))?;
                    Ok(ImageEntry { path: rel, sha256: image.sha256, model_id: resp.model_id })
                })
                .collect()
        });
        let stamp = self.stamp();
        for (mut record, result) in todo.into_iter().zip(results) {
            match result {
                Ok(entry) => {
                    record.image = Some(entry);
                    record.timestamps.synthesized = stamp;
                    self.tracks.get_mut(&record.track).expect("track state").insert(record);
                    report.processed += 1;
                    report.backend_ok += 1;
                }
                Err(e) => {
                    warn!("image for {} ({}) failed: {e}", record.concept_id, record.track);
                    report.errored += 1;
                    report.unavailable += usize::from(e.is_unavailable());
                }
            }
        }
        Ok(report)
    }

    fn validate(&mut self) -> anyhow::Result<StageReport> {
        let (todo, skipped) = self.work_items(|r| {
            r.image.is_some() && r.validation.as_ref().is_none_or(|v| v.is_errored())
        });
        let mut report = StageReport { stage: "validate".into(), skipped, ..StageReport::default() };
        let ctx = ValidationContext {
            backends: &self.backends.backends,
            vocab: &self.vocab,
            config: self.cfg.thresholds.into(),
            image_root: &self.layout.root,
        };
        let results: Vec<_> = self.pool()?.install(|| {
            todo.par_iter()
                .map(|r| {
                    let image = r.image.as_ref().expect("pending records have images");
                    let image_ref = ImageRef { sha256: image.sha256.clone(), path: image.path.clone() };
                    let concept = r.concept().expect("manifest records carry their concept");
                    let id = format!("{}:{}", r.concept_id, r.track);
                    validate_sample(&id, &image_ref, concept, r.track, &ctx)
                })
                .collect()
        });
        let stamp = self.stamp();
        for (mut record, validation) in todo.into_iter().zip(results) {
            if validation.is_errored() {
                warn!("validation of {} ({}) errored: {:?}", record.concept_id, record.track, validation.status);
                report.errored += 1;
                report.unavailable += 1;
            } else {
                report.processed += 1;
                report.backend_ok += 1;
            }
            record.validation = Some(validation);
            record.timestamps.validated = stamp;
            self.tracks.get_mut(&record.track).expect("track state").insert(record);
        }
        Ok(report)
    }

    fn negatives(&mut self) -> anyhow::Result<StageReport> {
        let (todo, skipped) = self.work_items(|r| r.is_validated() && !r.is_complete());
        let mut report = StageReport { stage: "negatives".into(), skipped, ..StageReport::default() };
        let include = self.cfg.include_binding_equivalents;
        let results: Vec<_> = self.pool()?.install(|| {
            todo.par_iter()
                .map(|r| {
                    let concept = r.concept().expect("manifest records carry their concept");
                    let caption = r.caption.as_ref().expect("validated records have captions");
                    [Scheme::Swap, Scheme::Confusion]
                        .into_iter()
                        .map(|s| build_negative_set(caption, concept, s, include))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect()
        });
        let stamp = self.stamp();
        for (mut record, result) in todo.into_iter().zip(results) {
            match result {
                Ok(sets) => {
                    record.negatives = sets;
                    record.timestamps.negatives = stamp;
                    self.tracks.get_mut(&record.track).expect("track state").insert(record);
                    report.processed += 1;
                }
                Err(e) => {
                    warn!("negatives for {} ({}) failed: {e}", record.concept_id, record.track);
                    report.errored += 1;
                }
            }
        }
        Ok(report)
    }

    pub fn records(&self, track: Track) -> Vec<ManifestRecord> {
        self.tracks[&track].ordered(&self.plan_ids())
    }

    fn curate(&mut self) -> anyhow::Result<StageReport> {
        let minimal = self.records(Track::Minimal);
        let contextual = self.records(Track::Contextual);
        let sets = curate_benchmarks(&minimal, &contextual);
        let all: Vec<ManifestRecord> = minimal.iter().chain(&contextual).cloned().collect();
        let stats = survival_stats(&all)?;
        let dir = self.layout.benchmark();
        let complete = |rs: &[ManifestRecord], keep: Option<&BTreeSet<ConceptId>>| -> Vec<ManifestRecord> {
            validated_records(rs, keep).into_iter().filter(|r| r.is_complete()).cloned().collect()
        };
        let min_ok = complete(&minimal, None);
        let ctx_ok = complete(&contextual, None);
        let paired: Vec<ManifestRecord> =
            complete(&minimal, Some(&sets.paired_ids)).into_iter().chain(complete(&contextual, Some(&sets.paired_ids))).collect();
        for (name, records) in [("minimal", &min_ok), ("contextual", &ctx_ok), ("paired", &paired)] {
            let refs: Vec<&ManifestRecord> = records.iter().collect();
            export_benchmark(&dir.join(name), &self.layout.root, &refs, &stats)?;
        }
        write_atomic(&dir.join("sets.json"), serde_json::to_string_pretty(&sets)?.as_bytes())?;
        write_atomic(&dir.join("stats.json"), serde_json::to_string_pretty(&stats_as_rows(&stats))?.as_bytes())?;
        Ok(StageReport {
            stage: "curate".into(),
            processed: min_ok.len() + ctx_ok.len(),
            ..StageReport::default()
        })
    }

    pub fn sets(&self) -> BenchmarkSets {
        curate_benchmarks(&self.records(Track::Minimal), &self.records(Track::Contextual))
    }

    pub fn survival(&self) -> anyhow::Result<Vec<SurvivalRow>> {
        let all: Vec<ManifestRecord> =
            self.records(Track::Minimal).into_iter().chain(self.records(Track::Contextual)).collect();
        Ok(stats_as_rows(&survival_stats(&all)?))
    }
}

/// Copies a generated image into the output tree, checking its hash.
fn store_image(image: &ImageRef, target: &Path) -> Result<(), BackendError> {
    let bytes = fs::read(&image.path)?;
    if sha256_hex(&bytes) != image.sha256 {
        return Err(BackendError::ProtocolViolation(format!("image {} does not match its hash", image.path)));
    }
    if let Some(parent) = target.parent() {
        fs::create_dir_all(parent)?;
    }
    if fs::read(target).ok().as_deref() != Some(bytes.as_slice()) {
        fs::write(target, &bytes)?;
    }
    Ok(())
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| anyhow::anyhow!("{} line {}: {e}", path.display(), i + 1)))
        .collect()
}

/// Runs the selected stages in order and summarizes the run.
pub fn run_pipeline(cfg: &RunConfig, fresh: bool) -> Result<RunReport, PipelineError> {
    cfg.check()?;
    let vocab = cfg.load_vocabulary()?;
    plan_concepts(cfg, &vocab)?;
    let stages = cfg.selected_stages();
    let layout = Layout::new(&cfg.output);
    if fresh {
        layout.clear().map_err(|e| PipelineError::Failed(e.into()))?;
    }
    let backends = build_backends(cfg, &layout, &needed_capabilities(cfg, &stages))?;
    let mut pipeline = Pipeline::new(cfg, vocab, layout.clone(), &backends)?;
    let mut reports = Vec::new();
    for stage in stages {
        reports.push(pipeline.run_stage(stage)?);
    }
    let errored: usize = reports.iter().map(|r| r.errored).sum();
    let unavailable: usize = reports.iter().map(|r| r.unavailable).sum();
    let served: usize = reports.iter().map(|r| r.backend_ok).sum();
    let status = if errored == 0 {
        ExitStatus::Success
    } else if unavailable > 0 && served == 0 {
        ExitStatus::Unreachable
    } else {
        ExitStatus::Partial
    };
    let sets = pipeline.sets();
    let report = RunReport {
        status,
        concepts: pipeline.plan.len(),
        stages: reports,
        survival: pipeline.survival()?,
        sets: Some(SetSizes {
            minimal: sets.minimal_ids.len(),
            contextual: sets.contextual_ids.len(),
            paired: sets.paired_ids.len(),
        }),
        remote_calls: backends.remote_calls(),
        cache_hits: backends.cache_hits(),
        cache_misses: backends.cache_misses(),
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| PipelineError::Failed(e.into()))?;
    write_atomic(&layout.root.join("run_report.json"), text.as_bytes()).map_err(|e| PipelineError::Failed(e.into()))?;
    Ok(report)
}
