//! Pipeline stages: typed inputs and outputs, manifests and no-op reruns.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use enercurate_core::bench::{self, ModelAnswer};
use enercurate_core::distiller::{deduplicate, DedupError, EmbeddingProvider, FeatureHashEmbedder};
use enercurate_core::gateway::{HttpEmbeddingProvider, JsonlSink, Role, TranscriptSink};
use enercurate_core::ingest::{ingest_directory, prepare};
use enercurate_core::jsonl::{read_jsonl, to_jsonl_string};
use enercurate_core::litref::refine;
use enercurate_core::model::{
    BenchItem, CandidateAnswerSet, CitationGraph, Corpus, Document, InstructionSample,
    RankedAnswerSet, WhitespaceTokenizer,
};
use enercurate_core::quality::{run_quality_loop, validation_sample};
use enercurate_core::rlhf::{
    build_preference_pairs, rank_candidates, reorder, select_gold, JudgeScorer,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use uuid::Uuid;

use crate::agents::build_agent;
use crate::config::{Config, EmbedderKind, ScorerKind};
use crate::error::CliError;
use crate::manifest::{digest, write_atomic, Counts, RunLog, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Dedup,
    Refine,
    Check,
    RlhfPairs,
    RsSelect,
    Eval,
}

/// What a stage reads or writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Directory,
    Corpus,
    CitationGraph,
    Refinement,
    Instructions,
    Outcomes,
    RankedSets,
    PreferencePairs,
    Candidates,
    GoldSet,
    Bench,
    BenchReport,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Dedup,
        Stage::Refine,
        Stage::Check,
        Stage::RlhfPairs,
        Stage::RsSelect,
        Stage::Eval,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Dedup => "dedup",
            Stage::Refine => "refine",
            Stage::Check => "check",
            Stage::RlhfPairs => "rlhf-pairs",
            Stage::RsSelect => "rs-select",
            Stage::Eval => "eval",
        }
    }

    pub fn input_kind(self) -> DataKind {
        match self {
            Stage::Ingest => DataKind::Directory,
            Stage::Dedup => DataKind::Corpus,
            Stage::Refine => DataKind::CitationGraph,
            Stage::Check => DataKind::Instructions,
            Stage::RlhfPairs => DataKind::RankedSets,
            Stage::RsSelect => DataKind::Candidates,
            Stage::Eval => DataKind::Bench,
        }
    }

    pub fn output_kind(self) -> DataKind {
        match self {
            Stage::Ingest | Stage::Dedup => DataKind::Corpus,
            Stage::Refine => DataKind::Refinement,
            Stage::Check => DataKind::Outcomes,
            Stage::RlhfPairs => DataKind::PreferencePairs,
            Stage::RsSelect => DataKind::GoldSet,
            Stage::Eval => DataKind::BenchReport,
        }
    }

    pub fn output_extension(self) -> &'static str {
        match self {
            Stage::Refine | Stage::Eval => "json",
            _ => "jsonl",
        }
    }

    /// Config sections recorded in the manifest and compared for no-op reruns.
    fn config_sections(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &["seed", "ingest"],
            Stage::Dedup => &["seed", "dedup", "embedder"],
            Stage::Refine => &["refine"],
            Stage::Check => &["seed", "quality", "agents.check", "agents.optimize"],
            Stage::RlhfPairs => &[],
            Stage::RsSelect => &["seed", "rlhf", "agents.judge"],
            Stage::Eval => &["seed", "eval", "agents.judge"],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| CliError::Usage(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageIo {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Model answers, for `eval`.
    pub answers: Option<PathBuf>,
    pub run_log: PathBuf,
}

impl StageIo {
    pub fn new(input: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        let output = output.into();
        let run_log = RunLog::beside(&output).path;
        Self {
            input: input.into(),
            output,
            answers: None,
            run_log,
        }
    }
}

/// Side output `<output><suffix>`.
pub fn side_path(output: &Path, suffix: &str) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

struct StageResult {
    files: Vec<(PathBuf, Vec<u8>)>,
    counts: Counts,
}

fn read_items<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    read_jsonl(path).map_err(|e| CliError::Io(e.to_string()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(path.display(), e))
}

fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    to_jsonl_string(items).into_bytes()
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("values serialize");
    s.push('\n');
    s.into_bytes()
}

fn output_paths(stage: Stage, io: &StageIo) -> Vec<PathBuf> {
    let o = &io.output;
    let mut paths = vec![o.clone()];
    match stage {
        Stage::Ingest => paths.extend([
            side_path(o, ".report.jsonl"),
            side_path(o, ".skipped.jsonl"),
        ]),
        Stage::Dedup => paths.push(side_path(o, ".report.json")),
        Stage::Check => paths.extend([
            side_path(o, ".parked.jsonl"),
            side_path(o, ".stats.json"),
            side_path(o, ".validation.json"),
        ]),
        _ => {}
    }
    paths
}

fn sink_for(cfg: &Config, io: &StageIo) -> Result<Option<Arc<dyn TranscriptSink>>, CliError> {
    if !cfg.run.transcripts {
        return Ok(None);
    }
    let path = side_path(&io.output, ".transcripts.jsonl");
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent.display(), e))?;
    }
    let sink = JsonlSink::append(&path).map_err(|e| CliError::io(path.display(), e))?;
    Ok(Some(Arc::new(sink)))
}

fn uses_agents(stage: Stage, cfg: &Config) -> bool {
    match stage {
        Stage::Check => true,
        Stage::RsSelect => cfg.rlhf.scorer == ScorerKind::Judge,
        Stage::Eval => cfg.eval.judge,
        _ => false,
    }
}

fn run_ingest(cfg: &Config, io: &StageIo) -> Result<StageResult, CliError> {
    let loaded = ingest_directory(&io.input, cfg.ingest.source, &cfg.ingest.subdomain)
        .map_err(|e| CliError::Io(e.to_string()))?;
    let filter = cfg
        .ingest
        .filter
        .compile()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let (corpus, rows) = prepare(&loaded.corpus, &filter, &WhitespaceTokenizer);
    let input = loaded.corpus.len() + loaded.skipped.len();
    let out = corpus.len();
    Ok(StageResult {
        files: vec![
            (io.output.clone(), jsonl(&corpus.documents)),
            (side_path(&io.output, ".report.jsonl"), jsonl(&rows)),
            (
                side_path(&io.output, ".skipped.jsonl"),
                jsonl(&loaded.skipped),
            ),
        ],
        counts: Counts {
            input,
            out,
            dropped: input - out,
            parked: 0,
        },
    })
}

fn run_dedup(cfg: &Config, io: &StageIo) -> Result<StageResult, CliError> {
    let corpus = Corpus::new(read_items::<Document>(&io.input)?);
    let e = &cfg.embedder;
    let provider: Box<dyn EmbeddingProvider> = match e.kind {
        EmbedderKind::Hash => Box::new(FeatureHashEmbedder::new(e.dimension, e.hash_seed)),
        EmbedderKind::Http => {
            let key = std::env::var(&e.api_key_env).ok().filter(|k| !k.is_empty());
            Box::new(
                HttpEmbeddingProvider::new(
                    &e.base_url,
                    key,
                    &e.model,
                    e.dimension,
                    Duration::from_secs(e.timeout_secs),
                )
                .with_retry(e.retry.clone())
                .with_batch_size(e.batch_size),
            )
        }
    };
    let (kept, report) =
        deduplicate(&corpus, &cfg.dedup, provider.as_ref(), cfg.seed).map_err(|err| match err {
            DedupError::Embedding(_) => CliError::Agent(err.to_string()),
            DedupError::Config(_) => CliError::Config(err.to_string()),
            other => CliError::Io(other.to_string()),
        })?;
    Ok(StageResult {
        files: vec![
            (io.output.clone(), jsonl(&kept.documents)),
            (side_path(&io.output, ".report.json"), json(&report)),
        ],
        counts: Counts {
            input: corpus.len(),
            out: kept.len(),
            dropped: report.removals.len(),
            parked: 0,
        },
    })
}

fn run_refine(cfg: &Config, io: &StageIo) -> Result<StageResult, CliError> {
    let graph: CitationGraph = read_json(&io.input)?;
    graph
        .validate()
        .map_err(|e| CliError::io(io.input.display(), e))?;
    let result = refine(&graph, &cfg.refine).map_err(|e| CliError::Io(e.to_string()))?;
    let out = result.v_double_prime.len();
    Ok(StageResult {
        files: vec![(io.output.clone(), json(&result))],
        counts: Counts {
            input: graph.nodes.len(),
            out,
            dropped: graph.nodes.len() - out,
            parked: 0,
        },
    })
}

fn run_check(cfg: &Config, io: &StageIo) -> Result<StageResult, CliError> {
    let samples: Vec<InstructionSample> = read_items(&io.input)?;
    let sink = sink_for(cfg, io)?;
    let checker = build_agent(Role::Check, &cfg.agents.check, cfg.seed, sink.clone())?;
    let optimizer = build_agent(Role::Optimize, &cfg.agents.optimize, cfg.seed, sink)?;
    let run = run_quality_loop(&samples, &cfg.quality, &checker, &optimizer);
    let validation = validation_sample(&run.outcomes, cfg.seed);
    let t = run.report.total;
    Ok(StageResult {
        files: vec![
            (io.output.clone(), jsonl(&run.outcomes)),
            (side_path(&io.output, ".parked.jsonl"), jsonl(&run.parked)),
            (side_path(&io.output, ".stats.json"), json(&run.report)),
            (side_path(&io.output, ".validation.json"), json(&validation)),
        ],
        counts: Counts {
            input: t.records,
            out: t.retained,
            dropped: t.discarded,
            parked: t.parked,
        },
    })
}

fn run_rlhf_pairs(io: &StageIo) -> Result<StageResult, CliError> {
    let sets: Vec<RankedAnswerSet> = read_items(&io.input)?;
    let pairs = build_preference_pairs(&sets).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(StageResult {
        files: vec![(io.output.clone(), jsonl(&pairs))],
        counts: Counts {
            input: sets.len(),
            out: pairs.len(),
            dropped: 0,
            parked: 0,
        },
    })
}

fn run_rs_select(cfg: &Config, io: &StageIo) -> Result<StageResult, CliError> {
    let sets: Vec<CandidateAnswerSet> = read_items(&io.input)?;
    let ranked: Vec<CandidateAnswerSet> = match cfg.rlhf.scorer {
        ScorerKind::Provided => sets
            .iter()
            .map(|s| match &s.scores {
                Some(scores) => Ok(reorder(s, scores)),
                None => Err(CliError::Io(format!(
                    "candidate set `{}` has no scores",
                    s.question_id
                ))),
            })
            .collect::<Result<_, _>>()?,
        ScorerKind::Judge => {
            let judge = build_agent(Role::Judge, &cfg.agents.judge, cfg.seed, sink_for(cfg, io)?)?;
            let scorer = JudgeScorer { judge };
            sets.iter()
                .map(|s| {
                    rank_candidates::<f64>(s, &scorer).map_err(|e| CliError::Agent(e.to_string()))
                })
                .collect::<Result<_, _>>()?
        }
    };
    let gold = select_gold(&ranked, cfg.rlhf.k).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(StageResult {
        files: vec![(io.output.clone(), jsonl(&gold))],
        counts: Counts {
            input: sets.len(),
            out: gold.len(),
            dropped: 0,
            parked: 0,
        },
    })
}

fn run_eval(cfg: &Config, io: &StageIo) -> Result<StageResult, CliError> {
    let items: Vec<BenchItem> = read_items(&io.input)?;
    let answers_path = io
        .answers
        .as_ref()
        .ok_or_else(|| CliError::Usage("eval needs an answers file".into()))?;
    let answers: Vec<ModelAnswer> = read_items(answers_path)?;
    let judge = if cfg.eval.judge {
        Some(build_agent(
            Role::Judge,
            &cfg.agents.judge,
            cfg.seed,
            sink_for(cfg, io)?,
        )?)
    } else {
        None
    };
    let report = bench::evaluate(&items, &answers, judge.as_ref(), cfg.eval.max_in_flight);
    Ok(StageResult {
        files: vec![(io.output.clone(), json(&report))],
        counts: Counts {
            input: items.len(),
            out: report.grades.len() + report.scores.len(),
            dropped: report.flagged.len(),
            parked: report.parked.len(),
        },
    })
}

/// Run one stage, or record a no-op when an identical run already completed.
///
/// Outputs are written to temporary files and renamed into place only after
/// the stage succeeds; the manifest is then appended to the run log.
pub fn run_stage(stage: Stage, cfg: &Config, io: &StageIo) -> Result<RunManifest, CliError> {
    let started_at = Utc::now();
    let mut inputs = vec![digest(&io.input)?];
    if let Some(a) = &io.answers {
        inputs.push(digest(a)?);
    }
    let config = cfg.snapshot(stage.config_sections());
    let log = RunLog::new(&io.run_log);
    let outputs = output_paths(stage, io);
    if let Some(prev) = log.completed(stage.as_str(), &inputs, &config, &outputs)? {
        log::info!("{stage}: inputs and config unchanged, skipping");
        let m = RunManifest {
            run_id: Uuid::new_v4(),
            started_at,
            finished_at: Utc::now(),
            noop: true,
            transcripts: None,
            ..prev
        };
        log.append(&m)?;
        return Ok(m);
    }
    let result = match stage {
        Stage::Ingest => run_ingest(cfg, io),
        Stage::Dedup => run_dedup(cfg, io),
        Stage::Refine => run_refine(cfg, io),
        Stage::Check => run_check(cfg, io),
        Stage::RlhfPairs => run_rlhf_pairs(io),
        Stage::RsSelect => run_rs_select(cfg, io),
        Stage::Eval => run_eval(cfg, io),
    }?;
    debug_assert_eq!(
        result
            .files
            .iter()
            .map(|(p, _)| p.clone())
            .collect::<Vec<_>>(),
        outputs
    );
    for (path, bytes) in &result.files {
        write_atomic(path, bytes)?;
    }
    let outputs = outputs
        .iter()
        .map(|p| digest(p))
        .collect::<Result<Vec<_>, _>>()?;
    let transcripts = (cfg.run.transcripts && uses_agents(stage, cfg)).then(|| {
        side_path(&io.output, ".transcripts.jsonl")
            .display()
            .to_string()
    });
    let m = RunManifest {
        run_id: Uuid::new_v4(),
        stage: stage.as_str().to_string(),
        inputs,
        outputs,
        config,
        seed: cfg.seed,
        started_at,
        finished_at: Utc::now(),
        counts: result.counts,
        noop: false,
        transcripts,
    };
    log.append(&m)?;
    Ok(m)
}
