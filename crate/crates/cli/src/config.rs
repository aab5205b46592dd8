//! Declarative run configuration.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use autocomp_core::backend::{ImageGenPayload, TextGenPayload};
use autocomp_core::caption::MatchConfig;
use autocomp_core::validation::ValidationConfig;
use autocomp_core::{TaskKind, Track, Vocabulary};
use serde::{Deserialize, Deserializer, Serialize};

/// A configuration problem; the CLI exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageName {
    Captions,
    Synth,
    Validate,
    Negatives,
    Curate,
}

impl StageName {
    pub const ALL: [StageName; 5] =
        [StageName::Captions, StageName::Synth, StageName::Validate, StageName::Negatives, StageName::Curate];

    pub fn as_str(self) -> &'static str {
        match self {
            StageName::Captions => "captions",
            StageName::Synth => "synth",
            StageName::Validate => "validate",
            StageName::Negatives => "negatives",
            StageName::Curate => "curate",
        }
    }
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "captions" | "gen-captions" => Ok(StageName::Captions),
            "synth" => Ok(StageName::Synth),
            "validate" => Ok(StageName::Validate),
            "negatives" => Ok(StageName::Negatives),
            "curate" => Ok(StageName::Curate),
            other => Err(format!("unknown stage `{other}`")),
        }
    }
}

fn task_kind<'de, D: Deserializer<'de>>(d: D) -> Result<TaskKind, D::Error> {
    let s = String::deserialize(d)?;
    TaskKind::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown task `{s}`")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    #[serde(deserialize_with = "task_kind")]
    pub task: TaskKind,
    pub n: usize,
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Where one capability is served from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EndpointSpec {
    Mock(PathBuf),
    Url(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    #[serde(default)]
    pub default: Option<EndpointSpec>,
    #[serde(default)]
    pub text_gen: Option<EndpointSpec>,
    #[serde(default)]
    pub image_gen: Option<EndpointSpec>,
    #[serde(default)]
    pub detect: Option<EndpointSpec>,
    #[serde(default)]
    pub vqa: Option<EndpointSpec>,
    #[serde(default)]
    pub embed: Option<EndpointSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub luma_min: u8,
    pub min_white_fraction: f64,
    pub box_threshold: f64,
    pub text_threshold: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        let v = ValidationConfig::default();
        Self {
            luma_min: v.luma_min,
            min_white_fraction: v.min_white_fraction,
            box_threshold: v.box_threshold,
            text_threshold: v.text_threshold,
        }
    }
}

impl From<Thresholds> for ValidationConfig {
    fn from(t: Thresholds) -> Self {
        ValidationConfig {
            luma_min: t.luma_min,
            min_white_fraction: t.min_white_fraction,
            box_threshold: t.box_threshold,
            text_threshold: t.text_threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextGenParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
}

impl Default for TextGenParams {
    fn default() -> Self {
        Self {
            temperature: TextGenPayload::DEFAULT_TEMPERATURE,
            top_p: TextGenPayload::DEFAULT_TOP_P,
            max_new_tokens: TextGenPayload::DEFAULT_MAX_NEW_TOKENS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageGenParams {
    pub width: u32,
    pub height: u32,
    pub steps: u32,
    pub guidance: f64,
}

impl Default for ImageGenParams {
    fn default() -> Self {
        Self {
            width: ImageGenPayload::DEFAULT_SIZE,
            height: ImageGenPayload::DEFAULT_SIZE,
            steps: ImageGenPayload::DEFAULT_STEPS,
            guidance: ImageGenPayload::DEFAULT_GUIDANCE,
        }
    }
}

fn default_retries() -> u32 {
    3
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_inflight() -> usize {
    4
}

fn yes() -> bool {
    true
}

fn both_tracks() -> Vec<Track> {
    Track::BOTH.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Vocabulary file; the built-in set when absent.
    #[serde(default)]
    pub vocabulary: Option<PathBuf>,
    pub tasks: Vec<TaskSpec>,
    #[serde(default)]
    pub backends: BackendsConfig,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default)]
    pub relation_gap: usize,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub text_generation: TextGenParams,
    #[serde(default)]
    pub image_generation: ImageGenParams,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub stages: Option<Vec<StageName>>,
    #[serde(default = "both_tracks")]
    pub tracks: Vec<Track>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_inflight")]
    pub inflight_per_capability: usize,
    #[serde(default = "yes")]
    pub include_binding_equivalents: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub record_timestamps: bool,
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| err(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.rebase(&base);
        Ok(cfg)
    }

    pub fn from_json(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(v) = self.vocabulary.as_mut() {
            join(v);
        }
        join(&mut self.output);
        let b = &mut self.backends;
        for spec in [&mut b.default, &mut b.text_gen, &mut b.image_gen, &mut b.detect, &mut b.vqa, &mut b.embed]
            .into_iter()
            .flatten()
        {
            if let EndpointSpec::Mock(p) = spec {
                join(p);
            }
        }
    }

    /// Checks ranges and that every referenced path exists.
    pub fn check(&self) -> Result<(), ConfigError> {
        if let Some(v) = &self.vocabulary {
            if !v.is_file() {
                return Err(err(format!("vocabulary file {} does not exist", v.display())));
            }
        }
        let b = &self.backends;
        for spec in [&b.default, &b.text_gen, &b.image_gen, &b.detect, &b.vqa, &b.embed].into_iter().flatten() {
            if let EndpointSpec::Mock(p) = spec {
                if !p.is_file() {
                    return Err(err(format!("mock script {} does not exist", p.display())));
                }
            }
        }
        MatchConfig::new(self.relation_gap).map_err(|e| err(e.to_string()))?;
        if self.retries == 0 {
            return Err(err("retries must be at least 1"));
        }
        let t = &self.thresholds;
        for (name, v) in [
            ("min_white_fraction", t.min_white_fraction),
            ("box_threshold", t.box_threshold),
            ("text_threshold", t.text_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(err(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        let g = &self.text_generation;
        if !(g.temperature >= 0.0) || !(0.0..=1.0).contains(&g.top_p) || g.max_new_tokens == 0 {
            return Err(err("text_generation parameters out of range"));
        }
        let i = &self.image_generation;
        if i.width == 0 || i.height == 0 || i.steps == 0 {
            return Err(err("image_generation parameters out of range"));
        }
        if self.workers == Some(0) || self.inflight_per_capability == 0 {
            return Err(err("workers and inflight_per_capability must be positive"));
        }
        if self.tracks.is_empty() {
            return Err(err("at least one track is required"));
        }
        if self.tasks.is_empty() {
            return Err(err("at least one task is required"));
        }
        for t in &self.tasks {
            let min_n = if t.task == TaskKind::PositionBinding { 2 } else { 1 };
            if t.n < min_n {
                return Err(err(format!("{} needs n >= {min_n}, got {}", t.task, t.n)));
            }
        }
        Ok(())
    }

    pub fn load_vocabulary(&self) -> Result<Vocabulary, ConfigError> {
        match &self.vocabulary {
            Some(p) => Vocabulary::load(p).map_err(|e| err(format!("{}: {e}", p.display()))),
            None => Ok(Vocabulary::default_set()),
        }
    }

    pub fn selected_stages(&self) -> Vec<StageName> {
        let mut stages = self.stages.clone().unwrap_or_else(|| StageName::ALL.to_vec());
        stages.sort();
        stages.dedup();
        stages
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig { relation_gap: self.relation_gap }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub stages: Vec<StageName>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub mock: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if !self.stages.is_empty() {
            cfg.stages = Some(self.stages.clone());
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(w) = self.workers {
            cfg.workers = Some(w);
        }
        if let Some(m) = &self.mock {
            cfg.backends = BackendsConfig { default: Some(EndpointSpec::Mock(m.clone())), ..BackendsConfig::default() };
        }
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
    }
}
