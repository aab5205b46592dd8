//! Subcommands.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use autocomp_core::backend::{call_backend, BackendRequest, BackendResult, Capability, ImageRef, Payload, TextGenPayload, VqaPayload};
use autocomp_core::dataset::{curate_benchmarks, read_manifest_or_empty, stats_as_rows, survival_stats, validated_records, ManifestRecord};
use autocomp_core::evaluator::{
    aggregate, build_blind_prompt, build_trials, embed_scores, parse_choice, read_score_file, score_records,
    write_score_file, ScoredTrial, Trial, TrialOutcome,
};
use autocomp_core::{derive_seed, Track};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use rayon::prelude::*;

use crate::config::{ConfigError, Overrides, RunConfig, StageName};
use crate::pipeline::{build_backends, run_pipeline, ExitStatus, Layout, PipelineError};
use crate::report::{emit_report, EvalSummary, Format, Results};

#[derive(Parser, Debug)]
#[command(name = "autocomp", version, about = "Compositional benchmark generation and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Serve every capability from this mock script.
    #[arg(long)]
    pub mock: Option<PathBuf>,
    /// Discard existing outputs before running (the cache is kept).
    #[arg(long, conflicts_with = "resume")]
    pub fresh: bool,
    /// Continue from existing manifests (the default).
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Table,
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Table => Format::Table,
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SetArg {
    /// Every validated record of each track.
    Full,
    /// Concepts validated in both tracks.
    Paired,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the selected stages (all by default).
    Run {
        #[command(flatten)]
        common: Common,
        /// Stage to run; repeatable.
        #[arg(long = "stage")]
        stages: Vec<StageName>,
    },
    /// Minimal template captions and contextual LLM captions.
    GenCaptions {
        #[command(flatten)]
        common: Common,
    },
    /// Image synthesis.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Object, background and attribute validation.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Hard-negative generation.
    Negatives {
        #[command(flatten)]
        common: Common,
    },
    /// Benchmark sets, exports and survival statistics.
    Curate {
        #[command(flatten)]
        common: Common,
    },
    /// Retrieval evaluation from a score file or live embeddings.
    Eval {
        #[command(flatten)]
        common: Common,
        /// JSONL score file; live scoring through the embed backend when absent.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Write the trials as JSONL for external scorers and stop.
        #[arg(long)]
        export_trials: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "full")]
        set: SetArg,
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
    },
    /// Caption-choice evaluation without (or with) the image.
    BlindEval {
        #[command(flatten)]
        common: Common,
        /// Negatives shown per prompt.
        #[arg(long, default_value_t = 49)]
        subsample: usize,
        /// Attach the image through the VQA backend.
        #[arg(long)]
        with_image: bool,
        #[arg(long, value_enum, default_value = "full")]
        set: SetArg,
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
    },
    /// Survival statistics from the manifests.
    Stats {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
    },
    /// Render a saved scores.json.
    Report {
        #[command(flatten)]
        common: Common,
        /// Scores file; defaults to `<out>/scores.json`.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitStatus::ConfigError.code() } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(status) => status.code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.status().code()
        }
    }
}

fn load_config(common: &Common, stages: Vec<StageName>) -> Result<RunConfig, PipelineError> {
    let path = common.config.as_ref().ok_or_else(|| ConfigError("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    Overrides {
        stages,
        seed: common.seed,
        workers: common.workers,
        mock: common.mock.clone(),
        out: common.out.clone(),
    }
    .apply(&mut cfg);
    cfg.check()?;
    Ok(cfg)
}

/// Output directory for read-only commands: `--out`, else the config's.
fn output_dir(common: &Common) -> Result<PathBuf, PipelineError> {
    if let Some(out) = &common.out {
        return Ok(out.clone());
    }
    Ok(load_config(common, Vec::new())?.output)
}

fn dispatch(command: Command) -> Result<ExitStatus, PipelineError> {
    match command {
        Command::Run { common, stages } => stage_command(&common, stages),
        Command::GenCaptions { common } => stage_command(&common, vec![StageName::Captions]),
        Command::Synth { common } => stage_command(&common, vec![StageName::Synth]),
        Command::Validate { common } => stage_command(&common, vec![StageName::Validate]),
        Command::Negatives { common } => stage_command(&common, vec![StageName::Negatives]),
        Command::Curate { common } => stage_command(&common, vec![StageName::Curate]),
        Command::Eval { common, scores, export_trials, set, format } => {
            eval(&common, scores.as_deref(), export_trials.as_deref(), set, format.into())
        }
        Command::BlindEval { common, subsample, with_image, set, format } => {
            blind_eval(&common, subsample, with_image, set, format.into())
        }
        Command::Stats { common, format } => stats(&common, format.into()),
        Command::Report { common, input, format } => report(&common, input, format.into()),
    }
}

fn stage_command(common: &Common, stages: Vec<StageName>) -> Result<ExitStatus, PipelineError> {
    let cfg = load_config(common, stages)?;
    let report = run_pipeline(&cfg, common.fresh)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| PipelineError::Failed(e.into()))?);
    Ok(report.status)
}

fn read_tracks(out: &Path) -> anyhow::Result<(Vec<ManifestRecord>, Vec<ManifestRecord>)> {
    let layout = Layout::new(out);
    Ok((
        read_manifest_or_empty(&layout.manifest(Track::Minimal))?,
        read_manifest_or_empty(&layout.manifest(Track::Contextual))?,
    ))
}

/// Trials over complete, validated records of the chosen set.
fn load_trials(out: &Path, set: SetArg) -> anyhow::Result<Vec<Trial>> {
    let (minimal, contextual) = read_tracks(out)?;
    let sets = curate_benchmarks(&minimal, &contextual);
    let keep = (set == SetArg::Paired).then_some(&sets.paired_ids);
    let records: Vec<&ManifestRecord> = validated_records(&minimal, keep)
        .into_iter()
        .chain(validated_records(&contextual, keep))
        .filter(|r| r.is_complete())
        .collect();
    if records.is_empty() {
        bail!("no validated records under {}", out.display());
    }
    Ok(build_trials(&records)?)
}

fn summarize(trials: &[ScoredTrial], set: SetArg) -> anyhow::Result<EvalSummary> {
    let mut keys: Vec<_> = trials.iter().map(|t| t.key).collect();
    keys.sort();
    keys.dedup();
    let scores = aggregate(trials, &keys)?;
    Ok(match set {
        SetArg::Paired => EvalSummary::with_deltas(scores),
        SetArg::Full => EvalSummary { scores, deltas: Vec::new() },
    })
}

fn write_summary(out: &Path, name: &str, summary: &EvalSummary) -> anyhow::Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(format!("{name}.json")), emit_report(&Results::Scores(summary), Format::Json))?;
    fs::write(out.join(format!("{name}.csv")), emit_report(&Results::Scores(summary), Format::Csv))?;
    Ok(())
}

fn eval(
    common: &Common,
    scores: Option<&Path>,
    export: Option<&Path>,
    set: SetArg,
    format: Format,
) -> Result<ExitStatus, PipelineError> {
    let out = output_dir(common)?;
    let trials = load_trials(&out, set)?;
    if let Some(path) = export {
        let mut text = String::new();
        for t in &trials {
            text.push_str(&serde_json::to_string(t).map_err(anyhow::Error::from)?);
            text.push('\n');
        }
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        return Ok(ExitStatus::Success);
    }
    let records = match scores {
        Some(path) => read_score_file(path).map_err(anyhow::Error::from)?,
        None => {
            let cfg = load_config(common, Vec::new())?;
            let layout = Layout::new(&out);
            let backends = build_backends(&cfg, &layout, &[Capability::Embed])?;
            let records = embed_scores(&trials, backends.backends.embed.as_ref()).map_err(|e| {
                if e.is_unavailable() {
                    PipelineError::Unreachable(e.to_string())
                } else {
                    PipelineError::Failed(e.into())
                }
            })?;
            write_score_file(&out.join("scores.jsonl"), &records).map_err(anyhow::Error::from)?;
            records
        }
    };
    let scored = score_records(&trials, &records).map_err(anyhow::Error::from)?;
    if scored.len() < trials.len() {
        warn!("{} of {} trials have no scores", trials.len() - scored.len(), trials.len());
    }
    let summary = summarize(&scored, set)?;
    write_summary(&out, "scores", &summary)?;
    print!("{}", emit_report(&Results::Scores(&summary), format));
    Ok(if scored.len() == trials.len() { ExitStatus::Success } else { ExitStatus::Partial })
}

const BLIND_SYSTEM: &str = "You will see a numbered list of captions. Exactly one of them is the original caption; the others were altered. Answer with the number of the original caption only.";

fn blind_eval(
    common: &Common,
    subsample: usize,
    with_image: bool,
    set: SetArg,
    format: Format,
) -> Result<ExitStatus, PipelineError> {
    let cfg = load_config(common, Vec::new())?;
    let out = cfg.output.clone();
    let trials = load_trials(&out, set)?;
    let layout = Layout::new(&out);
    let capability = if with_image { Capability::Vqa } else { Capability::TextGen };
    let backends = build_backends(&cfg, &layout, &[capability])?;
    let seed = cfg.seed.to_string();
    let results: Vec<Result<Option<ScoredTrial>, PipelineError>> = trials
        .par_iter()
        .map(|trial| {
            let prompt = build_blind_prompt(
                &trial.candidates[0],
                &trial.candidates[1..],
                derive_seed(&[&seed, &trial.trial_id, "blind"]),
                subsample,
            );
            let request = if with_image {
                let Some(image) = &trial.image else { return Ok(None) };
                Payload::Vqa(VqaPayload {
                    image: ImageRef { sha256: image.sha256.clone(), path: image.path.clone() },
                    question: prompt.text.clone(),
                    allowed_answers: (1..=prompt.k()).map(|i| i.to_string()).collect(),
                })
            } else {
                let mut payload = TextGenPayload::new(BLIND_SYSTEM, prompt.text.clone(), derive_seed(&[&seed, &trial.trial_id]));
                payload.temperature = cfg.text_generation.temperature;
                payload.top_p = cfg.text_generation.top_p;
                payload.max_new_tokens = cfg.text_generation.max_new_tokens;
                Payload::TextGen(payload)
            };
            let backend = backends.backends.for_capability(capability);
            let response = call_backend(backend.as_ref(), &BackendRequest::new(request)).map_err(|e| {
                if e.is_unavailable() {
                    PipelineError::Unreachable(e.to_string())
                } else {
                    PipelineError::Failed(e.into())
                }
            })?;
            let answer = match &response.result {
                BackendResult::Text { text } => text.clone(),
                BackendResult::Answer { answer } => answer.clone(),
                _ => unreachable!("call_backend checks the result kind"),
            };
            let chosen = parse_choice(&answer, prompt.k()).ok();
            let correct = chosen == Some(prompt.answer);
            let chosen_index = match chosen {
                Some(label) => prompt.sources[label - 1].map_or(0, |i| i + 1),
                None => 0,
            };
            let outcome = TrialOutcome {
                correct,
                chosen_index,
                chosen_arrangement: (!correct && chosen.is_some()).then(|| trial.arrangements[chosen_index].clone()),
                tie: false,
            };
            Ok(Some(ScoredTrial { key: trial.key, relation: trial.relation.clone(), outcome }))
        })
        .collect();
    let mut scored = Vec::new();
    for r in results {
        if let Some(t) = r? {
            scored.push(t);
        }
    }
    let summary = summarize(&scored, set)?;
    write_summary(&out, "blind_scores", &summary)?;
    print!("{}", emit_report(&Results::Scores(&summary), format));
    Ok(ExitStatus::Success)
}

fn stats(common: &Common, format: Format) -> Result<ExitStatus, PipelineError> {
    let out = output_dir(common)?;
    let (minimal, contextual) = read_tracks(&out)?;
    let all: Vec<ManifestRecord> = minimal.into_iter().chain(contextual).collect();
    let rows = stats_as_rows(&survival_stats(&all).map_err(anyhow::Error::from)?);
    print!("{}", emit_report(&Results::Survival(&rows), format));
    Ok(ExitStatus::Success)
}

fn report(common: &Common, input: Option<PathBuf>, format: Format) -> Result<ExitStatus, PipelineError> {
    let path = match input {
        Some(p) => p,
        None => output_dir(common)?.join("scores.json"),
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let summary: EvalSummary =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    print!("{}", emit_report(&Results::Scores(&summary), format));
    Ok(ExitStatus::Success)
}
