//! Benchmark grading.
//!
//! Objective items (single choice, multiple choice, fact check) are graded
//! offline with exact rational credit. Subjective items are scored by a
//! judge agent twice: once against the reference answer and once on the
//! answer alone.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gateway::{bounded_map, slots, AgentHandle, DispatchError, Slots};
use crate::model::{parse_truth, BenchItem, BenchKind};

pub type Credit = Ratio<u32>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradeDetail {
    Full,
    Partial,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradeFlag {
    /// The answer named a label that is not an option.
    Invalid,
    /// No answer was given.
    Empty,
    /// A fact-check answer was not a truth label.
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradingResult {
    pub item_id: String,
    pub kind: BenchKind,
    #[serde(with = "ratio_text")]
    pub credit: Credit,
    pub detail: GradeDetail,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<GradeFlag>,
}

mod ratio_text {
    use super::Credit;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Credit, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(r)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Credit, D::Error> {
        let s = String::deserialize(d)?;
        s.parse()
            .map_err(|_| serde::de::Error::custom(format!("invalid credit `{s}`")))
    }
}

impl GradingResult {
    fn new(item: &BenchItem, credit: Credit, flag: Option<GradeFlag>) -> Self {
        let detail = if credit == Credit::from_integer(1) {
            GradeDetail::Full
        } else if credit == Credit::from_integer(0) {
            GradeDetail::Zero
        } else {
            GradeDetail::Partial
        };
        Self {
            item_id: item.id.clone(),
            kind: item.kind,
            credit,
            detail,
            flag,
        }
    }

    pub fn credit_f64(&self) -> f64 {
        *self.credit.numer() as f64 / *self.credit.denom() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BenchError {
    #[error("item `{id}` is {actual:?}, not {expected:?}")]
    KindMismatch {
        id: String,
        expected: BenchKind,
        actual: BenchKind,
    },
    #[error("item `{0}` is not objectively gradable")]
    NotObjective(String),
}

fn expect_kind(item: &BenchItem, expected: BenchKind) -> Result<(), BenchError> {
    if item.kind != expected {
        return Err(BenchError::KindMismatch {
            id: item.id.clone(),
            expected,
            actual: item.kind,
        });
    }
    Ok(())
}

/// Map a raw label onto the item's option label, ignoring case and
/// surrounding punctuation such as `(B)` or `B.`.
fn canonical_label(item: &BenchItem, raw: &str) -> Option<String> {
    let t = raw
        .trim()
        .trim_matches(|c: char| c == '(' || c == ')' || c == '.' || c == ':');
    item.option_labels()
        .into_iter()
        .find(|l| l.eq_ignore_ascii_case(t))
        .map(str::to_string)
}

/// Split an answer such as `"A, C"`, `"A C"` or `"AC"` into labels.
pub fn split_labels(item: &BenchItem, text: &str) -> Vec<String> {
    let parts: Vec<&str> = text
        .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|p| !p.is_empty())
        .collect();
    if parts.len() == 1 && canonical_label(item, parts[0]).is_none() {
        let chars: Vec<String> = parts[0].chars().map(String::from).collect();
        if chars.len() > 1 && chars.iter().all(|c| canonical_label(item, c).is_some()) {
            return chars;
        }
    }
    parts.into_iter().map(str::to_string).collect()
}

pub fn grade_single_choice(item: &BenchItem, answer: &str) -> Result<GradingResult, BenchError> {
    expect_kind(item, BenchKind::SingleChoice)?;
    let zero = Credit::from_integer(0);
    if answer.trim().is_empty() {
        return Ok(GradingResult::new(item, zero, Some(GradeFlag::Empty)));
    }
    let Some(label) = canonical_label(item, answer) else {
        return Ok(GradingResult::new(item, zero, Some(GradeFlag::Invalid)));
    };
    let correct = item.gold_labels().is_some_and(|g| g.contains(&label));
    Ok(GradingResult::new(
        item,
        Credit::from_integer(correct as u32),
        None,
    ))
}

/// Any wrong option scores zero, the exact gold set scores one, and a proper
/// subset of the gold set scores `|answers| / |gold|`.
pub fn grade_multiple_choice(
    item: &BenchItem,
    answers: &BTreeSet<String>,
) -> Result<GradingResult, BenchError> {
    expect_kind(item, BenchKind::MultipleChoice)?;
    let zero = Credit::from_integer(0);
    if answers.is_empty() {
        return Ok(GradingResult::new(item, zero, Some(GradeFlag::Empty)));
    }
    let mut chosen = BTreeSet::new();
    for a in answers {
        match canonical_label(item, a) {
            Some(l) => {
                chosen.insert(l);
            }
            None => return Ok(GradingResult::new(item, zero, Some(GradeFlag::Invalid))),
        }
    }
    let gold = item.gold_labels().expect("validated choice item");
    if !chosen.is_subset(gold) {
        return Ok(GradingResult::new(item, zero, None));
    }
    Ok(GradingResult::new(
        item,
        Credit::new(chosen.len() as u32, gold.len() as u32),
        None,
    ))
}

pub fn grade_fact_check(item: &BenchItem, answer: &str) -> Result<GradingResult, BenchError> {
    expect_kind(item, BenchKind::FactCheck)?;
    let zero = Credit::from_integer(0);
    match parse_truth(answer) {
        None if answer.trim().is_empty() => {
            Ok(GradingResult::new(item, zero, Some(GradeFlag::Empty)))
        }
        None => Ok(GradingResult::new(item, zero, Some(GradeFlag::Unparseable))),
        Some(a) => Ok(GradingResult::new(
            item,
            Credit::from_integer((Some(a) == item.gold_truth()) as u32),
            None,
        )),
    }
}

/// A model's answer to one item, as read from an answers file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelAnswer {
    pub item_id: String,
    pub answer: AnswerValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnswerValue {
    Bool(bool),
    Labels(Vec<String>),
    Text(String),
}

impl AnswerValue {
    fn as_text(&self) -> String {
        match self {
            AnswerValue::Bool(b) => b.to_string(),
            AnswerValue::Labels(l) => l.join(","),
            AnswerValue::Text(t) => t.clone(),
        }
    }
}

/// Grade an objective item; `None` stands for a missing answer.
pub fn grade(item: &BenchItem, answer: Option<&AnswerValue>) -> Result<GradingResult, BenchError> {
    let text = answer.map(AnswerValue::as_text).unwrap_or_default();
    match item.kind {
        BenchKind::SingleChoice => grade_single_choice(item, &text),
        BenchKind::MultipleChoice => {
            let labels: BTreeSet<String> = match answer {
                Some(AnswerValue::Labels(l)) => l.iter().cloned().collect(),
                _ => split_labels(item, &text).into_iter().collect(),
            };
            grade_multiple_choice(item, &labels)
        }
        BenchKind::FactCheck => grade_fact_check(item, &text),
        _ => Err(BenchError::NotObjective(item.id.clone())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAccuracy {
    pub items: usize,
    /// Mean credit in percent.
    pub accuracy: f64,
    pub flagged: usize,
}

/// Unweighted mean of task accuracies.
pub fn objective_average(accuracies: &[f64]) -> Option<f64> {
    if accuracies.is_empty() {
        return None;
    }
    Some(accuracies.iter().sum::<f64>() / accuracies.len() as f64)
}

/// Per-task accuracy and the objective average over the tasks present.
///
/// Credits are summed in sorted order, so the report does not depend on the
/// order of `results`.
pub fn aggregate(results: &[GradingResult]) -> (BTreeMap<BenchKind, TaskAccuracy>, Option<f64>) {
    let mut by_kind: BTreeMap<BenchKind, Vec<&GradingResult>> = BTreeMap::new();
    for r in results {
        by_kind.entry(r.kind).or_default().push(r);
    }
    let per_task: BTreeMap<BenchKind, TaskAccuracy> = by_kind
        .into_iter()
        .map(|(k, rs)| {
            let mut credits: Vec<f64> = rs.iter().map(|r| r.credit_f64()).collect();
            credits.sort_by(f64::total_cmp);
            let accuracy = 100.0 * credits.iter().sum::<f64>() / credits.len() as f64;
            let flagged = rs.iter().filter(|r| r.flag.is_some()).count();
            (
                k,
                TaskAccuracy {
                    items: rs.len(),
                    accuracy,
                    flagged,
                },
            )
        })
        .collect();
    let avg = objective_average(
        &per_task
            .iter()
            .filter(|(k, _)| k.is_objective())
            .map(|(_, t)| t.accuracy)
            .collect::<Vec<_>>(),
    );
    (per_task, avg)
}

/// Extract a 0 to 10 score from a judge reply: `Score: 7.5`, `7.5/10`,
/// `{"score": 7.5}` or a bare number.
pub fn parse_judge_score(text: &str) -> Result<f64, String> {
    let value = if let Some(v) = serde_json::from_str::<serde_json::Value>(text.trim())
        .ok()
        .and_then(|v| v.get("score").and_then(serde_json::Value::as_f64))
    {
        v
    } else {
        let patterns = [
            r"(?i)score\s*[:=]\s*(-?\d+(?:\.\d+)?)",
            r"(-?\d+(?:\.\d+)?)\s*/\s*10\b",
            r"^\s*(-?\d+(?:\.\d+)?)\s*$",
        ];
        patterns
            .iter()
            .find_map(|p| {
                regex::Regex::new(p)
                    .expect("valid regex")
                    .captures(text)
                    .and_then(|c| c[1].parse::<f64>().ok())
            })
            .ok_or_else(|| "no score found".to_string())?
    };
    if !(0.0..=10.0).contains(&value) {
        return Err(format!("score {value} is outside [0, 10]"));
    }
    Ok(value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectiveScore {
    pub item_id: String,
    pub a_score: f64,
    pub e_score: f64,
    pub judge_transcript: String,
}

#[derive(Debug, thiserror::Error)]
pub enum JudgeError {
    /// The judge was reachable but never produced a usable score.
    #[error("item `{item_id}` flagged: {reason}")]
    Flagged { item_id: String, reason: String },
    /// The judge could not be reached; the item is parked.
    #[error("item `{item_id}` parked: {source}")]
    Parked {
        item_id: String,
        source: DispatchError,
    },
}

fn judged(
    judge: &AgentHandle,
    item_id: &str,
    template: &str,
    s: &Slots,
) -> Result<(f64, String), JudgeError> {
    let mut last = String::new();
    for _ in 0..2 {
        let reply = judge
            .dispatch_named(template, s)
            .map_err(|source| JudgeError::Parked {
                item_id: item_id.to_string(),
                source,
            })?;
        match parse_judge_score(&reply.text) {
            Ok(v) => return Ok((v, reply.text)),
            Err(e) => last = e,
        }
    }
    Err(JudgeError::Flagged {
        item_id: item_id.to_string(),
        reason: format!("{template}: {last}"),
    })
}

/// A-score against the reference, E-score on the answer alone.
pub fn judge_subjective(
    item: &BenchItem,
    answer: &str,
    reference: &str,
    judge: &AgentHandle,
) -> Result<SubjectiveScore, JudgeError> {
    let with_ref = slots([
        ("question", item.stem.as_str()),
        ("reference", reference),
        ("answer", answer),
    ]);
    let (a_score, a_text) = judged(judge, &item.id, "judge_reference", &with_ref)?;
    let alone = slots([("question", item.stem.as_str()), ("answer", answer)]);
    let (e_score, e_text) = judged(judge, &item.id, "judge_independent", &alone)?;
    Ok(SubjectiveScore {
        item_id: item.id.clone(),
        a_score,
        e_score,
        judge_transcript: format!("[judge_reference]\n{a_text}\n[judge_independent]\n{e_text}"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectiveSummary {
    pub items: usize,
    pub a_score: Option<f64>,
    pub e_score: Option<f64>,
    /// Human grade imported from an annotation file; never computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_grade: Option<String>,
}

/// One row of results for a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub objective: BTreeMap<BenchKind, TaskAccuracy>,
    pub objective_average: Option<f64>,
    pub subjective: BTreeMap<BenchKind, SubjectiveSummary>,
    pub grades: Vec<GradingResult>,
    pub scores: Vec<SubjectiveScore>,
    pub flagged: Vec<String>,
    pub parked: Vec<String>,
    /// Answers whose `item_id` matches no item.
    pub unmatched_answers: usize,
}

/// Grade every item. Subjective items are judged only when a judge is given.
pub fn evaluate(
    items: &[BenchItem],
    answers: &[ModelAnswer],
    judge: Option<&AgentHandle>,
    max_in_flight: usize,
) -> BenchReport {
    let by_id: BTreeMap<&str, &AnswerValue> = answers
        .iter()
        .map(|a| (a.item_id.as_str(), &a.answer))
        .collect();
    let ids: BTreeSet<&str> = items.iter().map(|i| i.id.as_str()).collect();
    let unmatched_answers = by_id.keys().filter(|k| !ids.contains(*k)).count();

    let grades: Vec<GradingResult> = items
        .par_iter()
        .filter(|i| i.kind.is_objective())
        .map(|i| grade(i, by_id.get(i.id.as_str()).copied()).expect("objective item"))
        .collect();
    let (objective, objective_average) = aggregate(&grades);

    let subjective_items: Vec<&BenchItem> =
        items.iter().filter(|i| !i.kind.is_objective()).collect();
    let mut scores = Vec::new();
    let mut flagged = Vec::new();
    let mut parked = Vec::new();
    if let Some(judge) = judge {
        let results = bounded_map(&subjective_items, max_in_flight, |_, item| {
            let answer = by_id
                .get(item.id.as_str())
                .map(|a| a.as_text())
                .unwrap_or_default();
            judge_subjective(item, &answer, item.reference_answer().unwrap_or(""), judge)
        });
        for r in results {
            match r {
                Ok(s) => scores.push(s),
                Err(JudgeError::Flagged { item_id, .. }) => flagged.push(item_id),
                Err(JudgeError::Parked { item_id, .. }) => parked.push(item_id),
            }
        }
    }
    let kind_of: BTreeMap<&str, BenchKind> =
        items.iter().map(|i| (i.id.as_str(), i.kind)).collect();
    let mut subjective: BTreeMap<BenchKind, SubjectiveSummary> = BTreeMap::new();
    for item in &subjective_items {
        subjective
            .entry(item.kind)
            .or_insert(SubjectiveSummary {
                items: 0,
                a_score: None,
                e_score: None,
                h_grade: None,
            })
            .items += 1;
    }
    for (kind, summary) in subjective.iter_mut() {
        let mine: Vec<&SubjectiveScore> = scores
            .iter()
            .filter(|s| kind_of[s.item_id.as_str()] == *kind)
            .collect();
        if !mine.is_empty() {
            let n = mine.len() as f64;
            summary.a_score = Some(mine.iter().map(|s| s.a_score).sum::<f64>() / n);
            summary.e_score = Some(mine.iter().map(|s| s.e_score).sum::<f64>() / n);
        }
    }
    BenchReport {
        objective,
        objective_average,
        subjective,
        grades,
        scores,
        flagged,
        parked,
        unmatched_answers,
    }
}

/// Attach imported human grades, keyed by task.
pub fn import_h_grades(report: &mut BenchReport, grades: &BTreeMap<BenchKind, String>) {
    for (kind, grade) in grades {
        if let Some(s) = report.subjective.get_mut(kind) {
            s.h_grade = Some(grade.clone());
        }
    }
}
