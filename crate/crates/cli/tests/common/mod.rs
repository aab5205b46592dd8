//! A scripted world for end-to-end runs: every backend answer is fixed per
//! concept so the expected survivors are known in advance.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use autocomp_cli::config::RunConfig;
use autocomp_cli::pipeline::plan_concepts;
use autocomp_core::backend::{Capability, EchoLabels, ErrorBody, Fixture, FixtureResponse, MockMode, MockScript};
use autocomp_core::caption::{check_concept, pair_phrases, render_minimal, MatchConfig, WHITE_BACKGROUND_SUFFIX};
use autocomp_core::raster::RasterSpec;
use autocomp_core::validation::build_attribute_questions;
use autocomp_core::{Concept, ConceptId, Vocabulary};
use tempfile::TempDir;

pub const BLIND_NEEDLE: &str = "altered. Answer with the number";

pub struct Scenario {
    pub dir: TempDir,
    pub config: PathBuf,
    pub out: PathBuf,
    pub concepts: Vec<Concept>,
    /// No contextual caption ever passes.
    pub discarded: ConceptId,
    /// Minimal image has a grey background.
    pub background_fail: ConceptId,
    /// Detector reports one instance too many on both tracks.
    pub object_fail: ConceptId,
    /// VQA gives a wrong answer on both tracks.
    pub attribute_fail: ConceptId,
}

impl Scenario {
    pub fn args(&self, command: &str) -> Vec<String> {
        vec!["autocomp".into(), command.into(), "--config".into(), self.config.display().to_string()]
    }

    pub fn manifest(&self, track: &str) -> PathBuf {
        self.out.join("manifests").join(format!("{track}.jsonl"))
    }

    pub fn run_report(&self) -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(self.out.join("run_report.json")).unwrap()).unwrap()
    }
}

fn escaped(s: &str) -> String {
    let quoted = serde_json::to_string(s).unwrap();
    quoted[1..quoted.len() - 1].to_string()
}

fn fixture(capability: Capability, contains: Vec<String>, response: FixtureResponse) -> Fixture {
    Fixture { capability, request_id: None, contains, response: Some(response), error: None }
}

pub fn contextual_text(concept: &Concept) -> String {
    let minimal = render_minimal(concept).text;
    let body = minimal.strip_suffix(WHITE_BACKGROUND_SUFFIX).unwrap_or(&minimal);
    format!("In a quiet studio, {body}.")
}

pub const CONFIG: &str = r#"{
  "tasks": [
    {"task": "color", "n": 2, "count": 8, "seed": 11},
    {"task": "color", "n": 3, "count": 4, "seed": 12},
    {"task": "position", "n": 2, "count": 5, "seed": 13},
    {"task": "position", "n": 3, "count": 3, "seed": 14}
  ],
  "backends": {"default": {"mock": "mock.json"}},
  "image_generation": {"width": 64, "height": 64},
  "output": "out",
  "workers": 4,
  "seed": 7,
  "record_timestamps": RECORD
}"#;

/// Writes `config.json` and `mock.json` for 20 concepts into a temp dir.
pub fn scenario(record_timestamps: bool) -> Scenario {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, CONFIG.replace("RECORD", &record_timestamps.to_string())).unwrap();
    let cfg = RunConfig::load(&config).unwrap();
    let vocab = Vocabulary::default_set();
    let concepts = plan_concepts(&cfg, &vocab).unwrap();
    assert_eq!(concepts.len(), 20);
    let (discarded, background_fail, object_fail, attribute_fail) =
        (concepts[3].id.clone(), concepts[5].id.clone(), concepts[9].id.clone(), concepts[14].id.clone());

    let mut fixtures = vec![fixture(
        Capability::TextGen,
        vec![BLIND_NEEDLE.into()],
        FixtureResponse::Text { text: "1".into() },
    )];
    for c in &concepts {
        let phrases: Vec<String> = pair_phrases(c).iter().map(|p| escaped(p)).collect();
        let text = if c.id == discarded {
            "A photo of some things on a table.".to_string()
        } else {
            let t = contextual_text(c);
            assert!(check_concept(&t, c, Some(&vocab), MatchConfig::default()).passed, "{t}");
            t
        };
        fixtures.push(fixture(Capability::TextGen, phrases, FixtureResponse::Text { text: text.clone() }));

        let white = if c.id == background_fail { [150, 150, 150] } else { [255, 255, 255] };
        let minimal_raster = RasterSpec::solid(64, 64, white).with_rect(4, 20, 10, 44, [200, 30, 30]);
        fixtures.push(fixture(
            Capability::ImageGen,
            vec![escaped(&render_minimal(c).text)],
            FixtureResponse::Raster { raster: minimal_raster },
        ));
        fixtures.push(fixture(
            Capability::ImageGen,
            vec![escaped(&text)],
            FixtureResponse::Raster { raster: RasterSpec::solid(64, 64, [120, 160, 200]) },
        ));

        let mut counts: BTreeMap<String, u32> = c.objects.iter().map(|o| (o.name.clone(), o.expected_count)).collect();
        if c.id == object_fail {
            *counts.get_mut(&c.objects[0].name).unwrap() += 1;
        }
        fixtures.push(fixture(
            Capability::Detect,
            vec![c.id.0.clone()],
            FixtureResponse::EchoLabels { echo_labels: EchoLabels { score: 0.9, counts, extra: Vec::new() } },
        ));

        for q in build_attribute_questions(c, &vocab) {
            let answer = if c.id == attribute_fail {
                q.allowed_answers.iter().find(|a| **a != q.expected).unwrap().clone()
            } else {
                q.expected.clone()
            };
            fixtures.push(fixture(
                Capability::Vqa,
                vec![c.id.0.clone(), escaped(&q.question)],
                FixtureResponse::Answer { answer },
            ));
        }
    }
    let script = MockScript { mode: MockMode::Keyed, model_id: "scripted-v1".into(), fixtures };
    fs::write(dir.path().join("mock.json"), serde_json::to_string_pretty(&script).unwrap()).unwrap();
    let out = dir.path().join("out");
    Scenario { dir, config, out, concepts, discarded, background_fail, object_fail, attribute_fail }
}

/// A mock script whose every capability reports the backend as down.
pub fn write_unavailable_script(path: &Path) {
    let fixtures = [Capability::TextGen, Capability::ImageGen, Capability::Detect, Capability::Vqa, Capability::Embed]
        .into_iter()
        .map(|capability| Fixture {
            capability,
            request_id: None,
            contains: Vec::new(),
            response: None,
            error: Some(ErrorBody { code: "BackendUnavailable".into(), message: "down".into() }),
        })
        .collect();
    let script = MockScript { mode: MockMode::Keyed, model_id: "down".into(), fixtures };
    fs::write(path, serde_json::to_string(&script).unwrap()).unwrap();
}
