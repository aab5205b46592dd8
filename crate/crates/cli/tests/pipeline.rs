mod common;

use std::collections::BTreeSet;
use std::fs;

use autocomp_cli::run_cli;
use autocomp_core::dataset::{read_manifest, BenchmarkSets, ManifestRecord};
use autocomp_core::evaluator::{ScoreRecord, Trial};
use autocomp_core::ConceptId;
use common::{scenario, write_unavailable_script};
use proptest::prelude::*;

fn run(args: &[String]) -> i32 {
    run_cli(args.iter().cloned())
}

fn with(mut args: Vec<String>, extra: &[&str]) -> Vec<String> {
    args.extend(extra.iter().map(|s| s.to_string()));
    args
}

fn validated(records: &[ManifestRecord]) -> BTreeSet<ConceptId> {
    records.iter().filter(|r| r.is_validated()).map(|r| r.concept_id.clone()).collect()
}

#[test]
fn full_run_reaches_expected_survivors() {
    let s = scenario(true);
    assert_eq!(run(&s.args("run")), 0);

    let minimal = read_manifest(&s.manifest("minimal")).unwrap();
    let contextual = read_manifest(&s.manifest("contextual")).unwrap();
    assert_eq!(minimal.len(), 19);
    assert_eq!(contextual.len(), 19);
    assert!(minimal.iter().chain(&contextual).all(|r| r.concept_id != s.discarded));
    let discarded = fs::read_to_string(s.out.join("discarded.jsonl")).unwrap();
    assert_eq!(discarded.lines().count(), 1);
    assert!(discarded.contains(&s.discarded.0));

    let min_ok = validated(&minimal);
    let ctx_ok = validated(&contextual);
    assert_eq!(min_ok.len(), 16);
    assert_eq!(ctx_ok.len(), 17);
    assert!(!min_ok.contains(&s.background_fail) && ctx_ok.contains(&s.background_fail));
    for failed in [&s.object_fail, &s.attribute_fail] {
        assert!(!min_ok.contains(failed) && !ctx_ok.contains(failed));
    }

    // Manifest order follows the concept plan.
    let plan: Vec<&ConceptId> = s.concepts.iter().map(|c| &c.id).filter(|id| **id != s.discarded).collect();
    let order: Vec<&ConceptId> = minimal.iter().map(|r| &r.concept_id).collect();
    assert_eq!(order, plan);

    for r in minimal.iter().chain(&contextual).filter(|r| r.is_validated()) {
        assert!(r.is_complete(), "{} lacks negatives", r.concept_id);
        let image = r.image.as_ref().unwrap();
        assert!(s.out.join(&image.path).is_file());
        assert_eq!(r.caption.as_ref().unwrap().track, r.track);
    }

    let sets: BenchmarkSets =
        serde_json::from_str(&fs::read_to_string(s.out.join("benchmark/sets.json")).unwrap()).unwrap();
    assert_eq!(sets.paired_ids, min_ok.intersection(&ctx_ok).cloned().collect());
    for dir in ["minimal", "contextual", "paired"] {
        assert!(s.out.join("benchmark").join(dir).join("manifest.jsonl").is_file());
    }
    let paired = read_manifest(&s.out.join("benchmark/paired/manifest.jsonl")).unwrap();
    assert_eq!(paired.len(), 2 * sets.paired_ids.len());

    let report = s.run_report();
    assert_eq!(report["status"], "success");
    assert_eq!(report["sets"]["paired"], 16);
}

#[test]
fn rerun_is_byte_identical_without_backend_calls() {
    let s = scenario(true);
    assert_eq!(run(&s.args("run")), 0);
    let first_min = fs::read(s.manifest("minimal")).unwrap();
    let first_ctx = fs::read(s.manifest("contextual")).unwrap();
    assert!(s.run_report()["remote_calls"].as_u64().unwrap() > 0);

    assert_eq!(run(&s.args("run")), 0);
    assert_eq!(fs::read(s.manifest("minimal")).unwrap(), first_min);
    assert_eq!(fs::read(s.manifest("contextual")).unwrap(), first_ctx);
    assert_eq!(s.run_report()["remote_calls"], 0);
}

#[test]
fn fresh_rerun_is_served_from_cache() {
    let s = scenario(false);
    assert_eq!(run(&s.args("run")), 0);
    let first = fs::read(s.manifest("minimal")).unwrap();
    let first_ctx = fs::read(s.manifest("contextual")).unwrap();

    assert_eq!(run(&with(s.args("run"), &["--fresh"])), 0);
    assert_eq!(fs::read(s.manifest("minimal")).unwrap(), first);
    assert_eq!(fs::read(s.manifest("contextual")).unwrap(), first_ctx);
    let report = s.run_report();
    assert_eq!(report["remote_calls"], 0);
    assert!(report["cache_hits"].as_u64().unwrap() > 0);
}

#[test]
fn stage_subcommands_match_a_single_run() {
    let whole = scenario(false);
    assert_eq!(run(&whole.args("run")), 0);
    let staged = scenario(false);
    for cmd in ["gen-captions", "synth", "validate", "negatives", "curate"] {
        assert_eq!(run(&staged.args(cmd)), 0, "{cmd}");
    }
    for track in ["minimal", "contextual"] {
        assert_eq!(fs::read(whole.manifest(track)).unwrap(), fs::read(staged.manifest(track)).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn interrupted_runs_resume_to_the_same_manifest(stop in 0usize..5) {
        let reference = scenario(false);
        prop_assert_eq!(run(&reference.args("run")), 0);
        let s = scenario(false);
        let stages = ["captions", "synth", "validate", "negatives", "curate"];
        let mut args = s.args("run");
        for stage in &stages[..=stop] {
            args.extend(["--stage".to_string(), stage.to_string()]);
        }
        prop_assert_eq!(run(&args), 0);
        prop_assert_eq!(run(&s.args("run")), 0);
        for track in ["minimal", "contextual"] {
            prop_assert_eq!(fs::read(reference.manifest(track)).unwrap(), fs::read(s.manifest(track)).unwrap());
        }
    }
}

#[test]
fn timestamps_are_the_only_difference_between_stamped_runs() {
    let a = scenario(true);
    let b = scenario(false);
    assert_eq!(run(&a.args("run")), 0);
    assert_eq!(run(&b.args("run")), 0);
    let strip = |p: std::path::PathBuf| read_manifest(&p).unwrap().iter().map(ManifestRecord::without_timestamps).collect::<Vec<_>>();
    assert_eq!(strip(a.manifest("minimal")), strip(b.manifest("minimal")));
    assert!(read_manifest(&a.manifest("minimal")).unwrap()[0].timestamps.captioned.is_some());
}

#[test]
fn missing_vocabulary_is_a_config_error() {
    let s = scenario(false);
    let text = fs::read_to_string(&s.config).unwrap().replacen('{', r#"{"vocabulary": "missing.json","#, 1);
    fs::write(&s.config, text).unwrap();
    assert_eq!(run(&s.args("run")), 2);
    assert!(!s.out.exists());
}

#[test]
fn bad_overrides_are_config_errors() {
    let s = scenario(false);
    let text = fs::read_to_string(&s.config).unwrap().replacen('{', r#"{"relation_gap": 5,"#, 1);
    fs::write(&s.config, text).unwrap();
    assert_eq!(run(&s.args("run")), 2);
    assert_eq!(run(&["autocomp".to_string(), "run".to_string()]), 2);
    assert_eq!(run(&["autocomp".to_string(), "bogus".to_string()]), 2);
}

#[test]
fn unreachable_backend_exits_3() {
    let s = scenario(false);
    let down = s.dir.path().join("down.json");
    write_unavailable_script(&down);
    assert_eq!(run(&with(s.args("run"), &["--mock", down.to_str().unwrap()])), 3);
    let absent = s.dir.path().join("absent.json");
    assert_eq!(run(&with(s.args("run"), &["--mock", absent.to_str().unwrap()])), 2);
}

#[test]
fn http_health_failure_exits_3() {
    let s = scenario(false);
    let text = fs::read_to_string(&s.config)
        .unwrap()
        .replace(r#"{"default": {"mock": "mock.json"}}"#, r#"{"default": {"url": "http://127.0.0.1:9"}}"#);
    fs::write(&s.config, text).unwrap();
    assert_eq!(run(&s.args("run")), 3);
}

#[test]
fn missing_fixtures_make_a_partial_run() {
    let s = scenario(false);
    let path = s.dir.path().join("mock.json");
    let mut script: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let victim = s.concepts[0].id.0.clone();
    script["fixtures"].as_array_mut().unwrap().retain(|f| {
        !(f["capability"] == "vqa" && f["contains"][0].as_str() == Some(victim.as_str()))
    });
    fs::write(&path, serde_json::to_string(&script).unwrap()).unwrap();
    assert_eq!(run(&s.args("run")), 1);
    let minimal = read_manifest(&s.manifest("minimal")).unwrap();
    let victim_record = minimal.iter().find(|r| r.concept_id.0 == victim).unwrap();
    assert!(victim_record.validation.as_ref().unwrap().is_errored());
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(s.out.join("benchmark/stats.json")).unwrap()).unwrap();
    let errored: u64 = stats.as_array().unwrap().iter().map(|r| r["errored"].as_u64().unwrap()).sum();
    assert_eq!(errored, 2);
}

#[test]
fn eval_from_score_file_and_reports() {
    let s = scenario(false);
    assert_eq!(run(&s.args("run")), 0);
    let trials_path = s.dir.path().join("trials.jsonl");
    assert_eq!(run(&with(s.args("eval"), &["--export-trials", trials_path.to_str().unwrap()])), 0);
    let trials: Vec<Trial> = fs::read_to_string(&trials_path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(trials.len(), 2 * (16 + 17));

    // Positive first everywhere, except one tie and one miss, listed in
    // reverse candidate order.
    let mut text = String::new();
    for (i, t) in trials.iter().enumerate() {
        let mut scores: Vec<f64> = (0..t.candidates.len()).map(|j| if j == 0 { 1.0 } else { 0.1 }).collect();
        if i == 0 {
            scores[1] = 1.0;
        }
        if i == 1 {
            scores[1] = 2.0;
        }
        let rec = ScoreRecord {
            trial_id: t.trial_id.clone(),
            candidate_ids: t.candidate_ids.iter().rev().cloned().collect(),
            scores: scores.into_iter().rev().collect(),
        };
        text.push_str(&serde_json::to_string(&rec).unwrap());
        text.push('\n');
    }
    let scores_path = s.dir.path().join("scores.jsonl");
    fs::write(&scores_path, text).unwrap();
    assert_eq!(run(&with(s.args("eval"), &["--scores", scores_path.to_str().unwrap(), "--format", "csv"])), 0);

    let csv = fs::read_to_string(s.out.join("scores.csv")).unwrap();
    assert!(csv.starts_with("task,n,track,scheme,accuracy,count\n"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(s.out.join("scores.json")).unwrap()).unwrap();
    let cells = summary["scores"]["cells"].as_array().unwrap();
    let correct: u64 = cells.iter().map(|c| c["correct"].as_u64().unwrap()).sum();
    let total: u64 = cells.iter().map(|c| c["total"].as_u64().unwrap()).sum();
    let ties: u64 = cells.iter().map(|c| c["ties"].as_u64().unwrap()).sum();
    assert_eq!((correct, total, ties), (total - 2, trials.len() as u64, 1));

    assert_eq!(run(&with(s.args("eval"), &["--scores", scores_path.to_str().unwrap(), "--set", "paired"])), 0);
    let paired: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(s.out.join("scores.json")).unwrap()).unwrap();
    assert!(!paired["deltas"].as_array().unwrap().is_empty());

    for format in ["table", "csv", "json"] {
        assert_eq!(run(&with(s.args("report"), &["--format", format])), 0);
        assert_eq!(run(&with(s.args("stats"), &["--format", format])), 0);
    }
}

#[test]
fn blind_eval_runs_against_the_text_backend() {
    let s = scenario(false);
    assert_eq!(run(&s.args("run")), 0);
    assert_eq!(run(&with(s.args("blind-eval"), &["--subsample", "5"])), 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(s.out.join("blind_scores.json")).unwrap()).unwrap();
    let total: u64 =
        summary["scores"]["cells"].as_array().unwrap().iter().map(|c| c["total"].as_u64().unwrap()).sum();
    assert_eq!(total, 2 * (16 + 17));
}
