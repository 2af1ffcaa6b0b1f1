//! Score / repair / re-score loop over instruction samples.
//!
//! A checker agent scores each sample on four dimensions. Samples that pass
//! are accepted; the rest go to an optimizer agent and are re-scored, up to
//! `max_rounds` scoring calls. Agent infrastructure failures park a sample
//! instead of discarding it.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::gateway::{bounded_map, slots, AgentHandle, DispatchError};
use crate::model::{Dimension, InstructionSample, Provenance, QualityReport, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Every dimension must reach the threshold.
    #[default]
    AllDims,
    /// The mean of the four dimensions must reach the threshold.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub threshold: f64,
    pub threshold_mode: ThresholdMode,
    pub max_rounds: u32,
    pub max_in_flight: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            threshold: 7.0,
            threshold_mode: ThresholdMode::AllDims,
            max_rounds: 10,
            max_in_flight: 4,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=10.0).contains(&self.threshold) {
            return Err(format!(
                "threshold must be in [0, 10], got {}",
                self.threshold
            ));
        }
        if self.max_rounds == 0 {
            return Err("max_rounds must be >= 1".into());
        }
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QualityError {
    #[error("scoring failed: {0}")]
    ScoringFailed(String),
    #[error("optimization failed: {0}")]
    OptimizationFailed(String),
}

/// Parse a checker reply into a report.
///
/// Accepts a JSON object (optionally wrapped in prose or a code fence) keyed by
/// dimension with `{"score", "reason"}` values, a `{"scores", "reasons"}`
/// object, or one `Dimension: score[/10] - reason` line per dimension. Every
/// dimension needs a score in [0, 10] and a nonempty reason.
pub fn parse_check_reply(text: &str, round: u32) -> Result<QualityReport, String> {
    let (scores, reasons) = match extract_json(text) {
        Some(v) => parse_json_scores(&v)?,
        None => parse_line_scores(text)?,
    };
    for dim in Dimension::ALL {
        if reasons.get(&dim).is_none_or(|r| r.trim().is_empty()) {
            return Err(format!("no reason given for {dim}"));
        }
    }
    QualityReport::new(scores, reasons, round).map_err(|e| e.to_string())
}

fn extract_json(text: &str) -> Option<Value> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    if end <= start {
        return None;
    }
    serde_json::from_str::<Value>(&text[start..=end])
        .ok()
        .filter(Value::is_object)
}

type ScoreMaps = (BTreeMap<Dimension, f64>, BTreeMap<Dimension, String>);

fn parse_json_scores(v: &Value) -> Result<ScoreMaps, String> {
    let mut scores = BTreeMap::new();
    let mut reasons = BTreeMap::new();
    let obj = v.as_object().expect("checked object");
    if let (Some(s), r) = (
        obj.get("scores").and_then(Value::as_object),
        obj.get("reasons"),
    ) {
        for (k, val) in s {
            let dim: Dimension = k
                .parse()
                .map_err(|e: crate::model::ModelError| e.to_string())?;
            scores.insert(
                dim,
                val.as_f64()
                    .ok_or(format!("score for {k} is not a number"))?,
            );
        }
        if let Some(r) = r.and_then(Value::as_object) {
            for (k, val) in r {
                if let (Ok(dim), Some(t)) = (k.parse::<Dimension>(), val.as_str()) {
                    reasons.insert(dim, t.to_string());
                }
            }
        }
        return Ok((scores, reasons));
    }
    for (k, val) in obj {
        let Ok(dim) = k.parse::<Dimension>() else {
            continue;
        };
        match val {
            Value::Number(n) => {
                scores.insert(dim, n.as_f64().unwrap_or(f64::NAN));
            }
            Value::Object(o) => {
                let s = o
                    .get("score")
                    .and_then(Value::as_f64)
                    .ok_or(format!("{k} has no numeric score"))?;
                scores.insert(dim, s);
                if let Some(r) = o.get("reason").and_then(Value::as_str) {
                    reasons.insert(dim, r.to_string());
                }
            }
            _ => return Err(format!("unexpected value for {k}")),
        }
    }
    Ok((scores, reasons))
}

fn parse_line_scores(text: &str) -> Result<ScoreMaps, String> {
    let re = regex::Regex::new(
        r"(?im)^\W*(accuracy|completeness|relevance|usefulness|usability)\W*[:=]\s*(-?\d+(?:\.\d+)?)\s*(?:/\s*10)?\s*(?:[-\x{2013}\x{2014}:,;]\s*)?(.*)$",
    )
    .expect("valid regex");
    let mut scores = BTreeMap::new();
    let mut reasons = BTreeMap::new();
    for cap in re.captures_iter(text) {
        let dim: Dimension = cap[1]
            .parse()
            .map_err(|e: crate::model::ModelError| e.to_string())?;
        let score: f64 = cap[2]
            .parse()
            .map_err(|_| format!("bad score `{}`", &cap[2]))?;
        scores.insert(dim, score);
        reasons.insert(dim, cap[3].trim().to_string());
    }
    if scores.is_empty() {
        return Err("reply contains no scores".into());
    }
    Ok((scores, reasons))
}

fn sample_slots(sample: &InstructionSample) -> crate::gateway::Slots {
    slots([
        ("task", sample.task.to_string()),
        ("subdomain", sample.subdomain.clone()),
        ("instruction", sample.instruction.clone()),
        ("input", sample.input.clone()),
        ("output", sample.output.clone()),
    ])
}

fn dispatch_error(e: DispatchError) -> String {
    e.to_string()
}

/// Ask the checker for a report. A malformed reply is re-asked once.
pub fn score_sample(
    sample: &InstructionSample,
    checker: &AgentHandle,
    round: u32,
) -> Result<QualityReport, QualityError> {
    let s = sample_slots(sample);
    let mut last = String::new();
    for _ in 0..2 {
        let reply = checker
            .dispatch(&s)
            .map_err(|e| QualityError::ScoringFailed(dispatch_error(e)))?;
        match parse_check_reply(&reply.text, round) {
            Ok(r) => return Ok(r),
            Err(e) => {
                log::warn!("malformed checker reply ({e}); re-asking");
                last = e;
            }
        }
    }
    Err(QualityError::ScoringFailed(format!(
        "malformed reply twice: {last}"
    )))
}

pub fn passes(report: &QualityReport, cfg: &LoopConfig) -> bool {
    match cfg.threshold_mode {
        ThresholdMode::AllDims => report.scores.values().all(|&s| s >= cfg.threshold),
        ThresholdMode::Mean => report.mean() >= cfg.threshold,
    }
}

fn feedback(report: &QualityReport) -> String {
    Dimension::ALL
        .iter()
        .map(|d| {
            let reason = report.reasons.get(d).map(String::as_str).unwrap_or("");
            format!("{d}: {}/10 - {reason}", report.score(*d))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Ask the optimizer for a revision. Only `input` and `output` may change.
pub fn optimize_sample(
    sample: &InstructionSample,
    report: &QualityReport,
    optimizer: &AgentHandle,
) -> Result<InstructionSample, QualityError> {
    let mut s = sample_slots(sample);
    s.insert("feedback".into(), feedback(report));
    let reply = optimizer
        .dispatch(&s)
        .map_err(|e| QualityError::OptimizationFailed(dispatch_error(e)))?;
    let (input, output) = match extract_json(&reply.text) {
        Some(v) => {
            let input = v
                .get("input")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or(sample.input.clone());
            let output = v
                .get("output")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_default();
            (input, output)
        }
        None => (sample.input.clone(), reply.text.trim().to_string()),
    };
    if output.trim().is_empty() {
        return Err(QualityError::OptimizationFailed(
            "optimizer returned an empty output".into(),
        ));
    }
    Ok(InstructionSample {
        instruction: sample.instruction.clone(),
        input,
        output,
        task: sample.task,
        subdomain: sample.subdomain.clone(),
        provenance: Provenance::Optimized,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopStatus {
    Accepted,
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopOutcome {
    pub sample: InstructionSample,
    pub status: LoopStatus,
    pub rounds_used: u32,
    pub history: Vec<QualityReport>,
}

/// A sample whose loop stopped on an agent failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParkedSample {
    pub index: usize,
    pub sample: InstructionSample,
    pub history: Vec<QualityReport>,
    pub reason: String,
}

/// Counts shaped like a per-task dataset-optimization table.
///
/// `records` is the input count, `filtered` the samples that failed their first
/// check, `optimized` the samples accepted after at least one repair, and
/// `retained` all accepted samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchStats {
    pub records: usize,
    pub filtered: usize,
    pub optimized: usize,
    pub retained: usize,
    pub discarded: usize,
    pub parked: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    pub total: BatchStats,
    pub per_task: BTreeMap<Task, BatchStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopRun {
    pub outcomes: Vec<LoopOutcome>,
    pub parked: Vec<ParkedSample>,
    pub report: LoopReport,
}

enum SampleResult {
    Done(LoopOutcome),
    Parked(ParkedSample),
}

fn run_one(
    index: usize,
    original: &InstructionSample,
    cfg: &LoopConfig,
    checker: &AgentHandle,
    optimizer: &AgentHandle,
) -> SampleResult {
    let mut sample = original.clone();
    let mut history = Vec::new();
    for round in 1..=cfg.max_rounds {
        let report = match score_sample(&sample, checker, round) {
            Ok(r) => r,
            Err(e) => {
                return SampleResult::Parked(ParkedSample {
                    index,
                    sample,
                    history,
                    reason: e.to_string(),
                })
            }
        };
        let ok = passes(&report, cfg);
        history.push(report);
        if ok {
            return SampleResult::Done(LoopOutcome {
                sample,
                status: LoopStatus::Accepted,
                rounds_used: round,
                history,
            });
        }
        if round == cfg.max_rounds {
            break;
        }
        match optimize_sample(&sample, history.last().expect("just pushed"), optimizer) {
            Ok(revised) => sample = revised,
            Err(e) => {
                return SampleResult::Parked(ParkedSample {
                    index,
                    sample,
                    history,
                    reason: e.to_string(),
                })
            }
        }
    }
    SampleResult::Done(LoopOutcome {
        sample,
        status: LoopStatus::Discarded,
        rounds_used: history.len() as u32,
        history,
    })
}

/// Run the loop over every sample, `cfg.max_in_flight` samples at a time.
/// Outcomes keep input order; parked samples are listed separately.
pub fn run_quality_loop(
    samples: &[InstructionSample],
    cfg: &LoopConfig,
    checker: &AgentHandle,
    optimizer: &AgentHandle,
) -> LoopRun {
    let results = bounded_map(samples, cfg.max_in_flight, |i, s| {
        run_one(i, s, cfg, checker, optimizer)
    });
    let mut report = LoopReport::default();
    let mut outcomes = Vec::new();
    let mut parked = Vec::new();
    for (original, r) in samples.iter().zip(results) {
        let mut delta = BatchStats {
            records: 1,
            ..Default::default()
        };
        match &r {
            SampleResult::Done(o) => {
                let first_failed = o.history.first().is_some_and(|h| !passes(h, cfg));
                delta.filtered = first_failed as usize;
                match o.status {
                    LoopStatus::Accepted => {
                        delta.retained = 1;
                        delta.optimized = (o.rounds_used > 1) as usize;
                    }
                    LoopStatus::Discarded => delta.discarded = 1,
                }
            }
            SampleResult::Parked(p) => {
                delta.parked = 1;
                delta.filtered = p.history.first().is_some_and(|h| !passes(h, cfg)) as usize;
            }
        }
        for stats in [
            &mut report.total,
            report.per_task.entry(original.task).or_default(),
        ] {
            stats.records += delta.records;
            stats.filtered += delta.filtered;
            stats.optimized += delta.optimized;
            stats.retained += delta.retained;
            stats.discarded += delta.discarded;
            stats.parked += delta.parked;
        }
        match r {
            SampleResult::Done(o) => outcomes.push(o),
            SampleResult::Parked(p) => parked.push(p),
        }
    }
    LoopRun {
        outcomes,
        parked,
        report,
    }
}

/// Per task, how many accepted samples to hand to manual review: 200 for the
/// largest task, proportionally fewer for the others, never below 100 and
/// never more than the task holds.
pub fn validation_quota(task_sizes: &BTreeMap<Task, usize>) -> BTreeMap<Task, usize> {
    let largest = task_sizes.values().copied().max().unwrap_or(0);
    task_sizes
        .iter()
        .map(|(&t, &n)| {
            let proportional = if largest == 0 {
                0
            } else {
                (200 * n).div_ceil(largest)
            };
            (t, proportional.clamp(100, 200).min(n))
        })
        .collect()
}

/// Seeded sample of accepted outcomes for manual review, per task.
pub fn validation_sample(outcomes: &[LoopOutcome], seed: u64) -> BTreeMap<Task, Vec<usize>> {
    let mut by_task: BTreeMap<Task, Vec<usize>> = BTreeMap::new();
    for (i, o) in outcomes.iter().enumerate() {
        if o.status == LoopStatus::Accepted {
            by_task.entry(o.sample.task).or_default().push(i);
        }
    }
    let sizes = by_task.iter().map(|(t, v)| (*t, v.len())).collect();
    let quota = validation_quota(&sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    by_task
        .into_iter()
        .map(|(t, mut idx)| {
            idx.shuffle(&mut rng);
            idx.truncate(quota[&t]);
            idx.sort_unstable();
            (t, idx)
        })
        .collect()
}
